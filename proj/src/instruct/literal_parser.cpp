// Restricted Python-literal reader for model responses and aspect-list cells.
//
//   object := '{' [ entry (',' entry)* [','] ] '}'
//   entry  := string ':' value
//   value  := string | list
//   list   := '[' [ string (',' string)* [','] ] ']'
//   string := '...' | "..."   with backslash escapes

#include <optional>
#include <variant>

#include "lpcaps/error.hpp"
#include "lpcaps/instruct.hpp"

namespace lpcaps::instruct {

namespace {

using Value = std::variant<std::string, std::vector<std::string>>;

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class LiteralReader {
 public:
  LiteralReader(std::string_view src, std::size_t pos) : src_(src), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  void skip_ws() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw validation_error("syntax_error", what + " at offset " + std::to_string(pos_));
  }

  std::string read_string() {
    skip_ws();
    if (pos_ >= src_.size() || (src_[pos_] != '\'' && src_[pos_] != '"')) {
      fail("expected quoted string");
    }
    const std::size_t open = pos_;
    const char quote = src_[pos_++];
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) {
        throw validation_error("unterminated_string",
                               "unterminated string starting at offset " + std::to_string(open));
      }
      const char c = src_[pos_++];
      if (c == quote) return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (pos_ >= src_.size()) continue;  // reported as unterminated next loop
      const char e = src_[pos_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '0': out.push_back('\0'); break;
        case '\\': case '\'': case '"': case '/': out.push_back(e); break;
        case 'u': {
          if (pos_ + 4 > src_.size()) fail("truncated \\u escape");
          unsigned cp = 0;
          for (int k = 0; k < 4; ++k) {
            const char h = src_[pos_++];
            cp <<= 4;
            if (h >= '0' && h <= '9') cp |= static_cast<unsigned>(h - '0');
            else if (h >= 'a' && h <= 'f') cp |= static_cast<unsigned>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') cp |= static_cast<unsigned>(h - 'A' + 10);
            else fail("bad hex digit in \\u escape");
          }
          append_utf8(out, cp);
          break;
        }
        default:
          // Python keeps unknown escapes verbatim.
          out.push_back('\\');
          out.push_back(e);
          break;
      }
    }
  }

  std::vector<std::string> read_list() {
    expect('[');
    std::vector<std::string> items;
    while (true) {
      if (peek(']')) {
        ++pos_;
        return items;
      }
      items.push_back(read_string());
      if (peek(',')) {
        ++pos_;
      } else if (!peek(']')) {
        fail("expected ',' or ']'");
      }
    }
  }

  std::optional<Value> read_value() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '\'' || c == '"') return Value(read_string());
    if (c == '[') {
      // A list with a non-string element is reported as a type mismatch.
      const auto save = pos_;
      try {
        return Value(read_list());
      } catch (const Error& e) {
        if (e.code() == "unterminated_string") throw;
        pos_ = save;
        return std::nullopt;
      }
    }
    return std::nullopt;
  }

  // Skips a value outside the restricted grammar so parsing can continue to
  // the next key. Only brackets and quotes are tracked.
  void skip_foreign_value() {
    int depth = 0;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\'' || c == '"') {
        read_string();
        continue;
      }
      if (c == '[' || c == '{' || c == '(') ++depth;
      if (c == ']' || c == '}' || c == ')') {
        if (depth == 0) return;
        --depth;
      }
      if (c == ',' && depth == 0) return;
      ++pos_;
    }
  }

 private:
  std::string_view src_;
  std::size_t pos_;
};

struct ParsedObject {
  std::vector<std::pair<std::string, std::optional<Value>>> entries;
};

ParsedObject read_object(LiteralReader& reader) {
  ParsedObject obj;
  reader.expect('{');
  while (true) {
    if (reader.peek('}')) {
      reader.expect('}');
      return obj;
    }
    auto key = reader.read_string();
    reader.expect(':');
    auto value = reader.read_value();
    if (!value) reader.skip_foreign_value();
    obj.entries.emplace_back(std::move(key), std::move(value));
    if (reader.peek(',')) {
      reader.expect(',');
    } else if (!reader.peek('}')) {
      reader.fail("expected ',' or '}'");
    }
  }
}

const std::optional<Value>* find_entry(const ParsedObject& obj, std::string_view key) {
  const std::optional<Value>* hit = nullptr;
  for (const auto& [k, v] : obj.entries) {
    if (k == key) hit = &v;  // last duplicate wins, as in Python
  }
  return hit;
}

AttributeResponse to_response(const ParsedObject& obj) {
  const auto* attrs = find_entry(obj, "new_attribute");
  std::string attr_key = "new_attribute";
  if (attrs == nullptr) {
    attrs = find_entry(obj, "new_attributes");
    attr_key = "new_attributes";
  }
  if (attrs == nullptr) throw validation_error("missing_key", "missing key new_attribute");
  const auto* desc = find_entry(obj, "description");
  if (desc == nullptr) throw validation_error("missing_key", "missing key description");

  if (!attrs->has_value() || !std::holds_alternative<std::vector<std::string>>(**attrs)) {
    throw validation_error("type_mismatch", attr_key + " must be a list of strings");
  }
  if (!desc->has_value() || !std::holds_alternative<std::string>(**desc)) {
    throw validation_error("type_mismatch", "description must be a string");
  }
  AttributeResponse response;
  for (const auto& a : std::get<std::vector<std::string>>(**attrs)) {
    if (a.find_first_not_of(" \t\r\n") != std::string::npos) response.new_attributes.push_back(a);
  }
  response.description = std::get<std::string>(**desc);
  if (response.description.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw validation_error("empty_description", "description is empty");
  }
  return response;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\0': out += "\\0"; break;
      default: out.push_back(c); break;
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace

AttributeResponse parse_attribute_response(std::string_view raw) {
  std::optional<Error> first_error;
  for (std::size_t start = raw.find('{'); start != std::string_view::npos;
       start = raw.find('{', start + 1)) {
    try {
      LiteralReader reader(raw, start);
      return to_response(read_object(reader));
    } catch (const Error& e) {
      if (!first_error) first_error = e;
    }
  }
  if (first_error) throw *first_error;
  throw validation_error("no_object_found", "no {...} object in response");
}

std::string serialize_attribute_response(const AttributeResponse& response) {
  std::string out = "{\"new_attribute\": [";
  for (std::size_t i = 0; i < response.new_attributes.size(); ++i) {
    if (i > 0) out += ", ";
    out += quote(response.new_attributes[i]);
  }
  out += "], \"description\": " + quote(response.description) + "}";
  return out;
}

std::vector<std::string> parse_string_list_literal(std::string_view literal) {
  LiteralReader reader(literal, 0);
  std::vector<std::string> items;
  try {
    items = reader.read_list();
  } catch (const Error& e) {
    if (e.code() == "unterminated_string") throw;
    throw validation_error("malformed_list_literal",
                           "not a bracketed list of quoted strings: " + std::string(e.what()));
  }
  reader.skip_ws();
  if (reader.pos() != literal.size()) {
    throw validation_error("malformed_list_literal", "trailing characters after list");
  }
  return items;
}

}  // namespace lpcaps::instruct
