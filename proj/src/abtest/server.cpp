#include "lpcaps/abtest_server.hpp"

#include <httplib.h>

#include <fstream>

#include "lpcaps/error.hpp"
#include "lpcaps/log.hpp"

namespace lpcaps::abtest {

using nlohmann::json;

int status_for(const std::string& code) {
  if (code == "unknown_study" || code == "unknown_question" || code == "audio_not_found") {
    return 404;
  }
  if (code == "not_assigned") return 403;
  if (code == "duplicate_response" || code == "insufficient_questions") return 409;
  if (code == "bad_request" || code == "invalid_choice") return 400;
  return 500;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
  send_json(res, status_for(code), json{{"error", {{"code", code}, {"message", message}}}});
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".wav") return "audio/wav";
  if (ext == ".mp3") return "audio/mpeg";
  if (ext == ".flac") return "audio/flac";
  if (ext == ".ogg") return "audio/ogg";
  if (ext == ".m4a") return "audio/mp4";
  return "application/octet-stream";
}

bool safe_name(const std::string& name) {
  return !name.empty() && name.find('/') == std::string::npos &&
         name.find('\\') == std::string::npos && name != "." && name != ".." &&
         name.find("..") == std::string::npos;
}

}  // namespace

StudyServer::StudyServer(ServerOptions options)
    : options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

StudyServer::~StudyServer() { stop(); }

void StudyServer::add_study(std::unique_ptr<StudyStore> store) {
  const auto id = store->study().study_id;
  stores_[id] = std::move(store);
}

StudyStore* StudyServer::store(const std::string& study_id) const {
  const auto it = stores_.find(study_id);
  return it == stores_.end() ? nullptr : it->second.get();
}

int StudyServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool StudyServer::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

bool StudyServer::listen_after_bind() { return server_->listen_after_bind(); }

void StudyServer::stop() {
  if (server_) server_->stop();
}

void StudyServer::wait_until_ready() const { server_->wait_until_ready(); }

void StudyServer::install_routes() {
  auto& srv = *server_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, "internal_error", e.what());
    }
  });

  const auto find_store = [this](const httplib::Request& req) {
    const auto& id = req.path_params.at("id");
    auto* s = store(id);
    if (s == nullptr) throw validation_error("unknown_study", "unknown study " + id);
    return s;
  };

  srv.Get("/study/:id/session", [this, find_store](const httplib::Request& req,
                                                   httplib::Response& res) {
    auto* s = find_store(req);
    const auto rater = req.get_param_value("rater");
    if (rater.empty()) throw validation_error("bad_request", "missing rater parameter");
    const auto ids = s->assign_session(rater, options_.session_size);
    json questions = json::array();
    std::size_t answered = 0;
    for (const auto& id : ids) {
      const auto* q = s->study().find(id);
      const bool done = s->answered(rater, id);
      answered += done ? 1 : 0;
      questions.push_back({{"question_id", q->question_id},
                           {"sample_id", q->sample_id},
                           {"audio_url", "/audio/" + q->sample_id},
                           {"caption_a", q->caption_a},
                           {"caption_b", q->caption_b},
                           {"answered", done}});
    }
    send_json(res, 200,
              json{{"study_id", s->study().study_id},
                   {"rater_id", rater},
                   {"questions", questions},
                   {"answered", answered},
                   {"total", ids.size()}});
  });

  srv.Post("/study/:id/responses", [find_store](const httplib::Request& req,
                                                httplib::Response& res) {
    auto* s = find_store(req);
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      throw validation_error("bad_request", "body is not valid JSON");
    }
    auto response = response_from_json(body);
    response.submitted_at.clear();  // server clock is authoritative
    const auto question_id = response.question_id;
    s->record_response(std::move(response));
    send_json(res, 201, json{{"status", "recorded"}, {"question_id", question_id}});
  });

  srv.Get("/study/:id/results", [find_store](const httplib::Request& req,
                                             httplib::Response& res) {
    auto* s = find_store(req);
    auto body = to_json(s->results());
    body["study_id"] = s->study().study_id;
    body["responses"] = s->responses().size();
    send_json(res, 200, body);
  });

  srv.Get("/audio/:sample_id", [this](const httplib::Request& req, httplib::Response& res) {
    const auto& sample = req.path_params.at("sample_id");
    if (!safe_name(sample)) throw validation_error("bad_request", "invalid sample id");
    if (!options_.audio_dir) throw validation_error("audio_not_found", "no audio directory");
    std::optional<std::filesystem::path> found;
    const auto direct = *options_.audio_dir / sample;
    if (std::filesystem::is_regular_file(direct)) {
      found = direct;
    } else {
      for (const char* ext : {".wav", ".mp3", ".flac", ".ogg", ".m4a"}) {
        const auto candidate = *options_.audio_dir / (sample + ext);
        if (std::filesystem::is_regular_file(candidate)) {
          found = candidate;
          break;
        }
      }
    }
    if (!found) throw validation_error("audio_not_found", "no audio for sample " + sample);
    const auto size = std::filesystem::file_size(*found);
    auto file = std::make_shared<std::ifstream>(*found, std::ios::binary);
    res.set_content_provider(
        size, content_type_for(*found),
        [file](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
          std::vector<char> buf(std::min<std::size_t>(length, 64 * 1024));
          file->seekg(static_cast<std::streamoff>(offset));
          file->read(buf.data(), static_cast<std::streamsize>(buf.size()));
          const auto got = file->gcount();
          if (got <= 0) return false;
          return sink.write(buf.data(), static_cast<std::size_t>(got));
        });
  });

  if (options_.static_dir) {
    if (!srv.set_mount_point("/", options_.static_dir->string())) {
      log::warn("static directory not mounted: " + options_.static_dir->string());
    }
  }
}

}  // namespace lpcaps::abtest
