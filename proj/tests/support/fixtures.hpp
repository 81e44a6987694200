#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fixtures {

inline const std::vector<std::string> kChiptuneTags = {
    "video game theme", "no singer", "instrumental", "analog sounding", "small keyboard",
    "beatboxing",       "playful",   "cheerful",     "groovy"};

inline constexpr std::string_view kChiptuneWriting =
    "This instrumental track has a joyful and playful vibe, perfect for a video game theme. "
    "With no singer, the analog-sounding music features a small keyboard and beatboxing, "
    "creating a groovy and cheerful atmosphere.";

inline constexpr std::string_view kChiptuneAttribute =
    R"({"new_attribute": ["8-bit sound", "chiptune style", "retro vibe"], )"
    R"("description": "This instrumental tune is straight out of a video game with its )"
    R"(analog sounding melodies and small keyboard tinkles. Beatboxing adds a playful )"
    R"(element to the groovy, cheerful vibe. Reminiscent of classic 8-bit sound and )"
    R"(chiptune style, this retro vibe is sure to put a smile on your face."})";

inline constexpr std::string_view kChiptuneDescription =
    "This instrumental tune is straight out of a video game with its analog sounding "
    "melodies and small keyboard tinkles. Beatboxing adds a playful element to the groovy, "
    "cheerful vibe. Reminiscent of classic 8-bit sound and chiptune style, this retro vibe "
    "is sure to put a smile on your face.";

inline std::filesystem::path data_dir() { return LPCAPS_TEST_DATA_DIR; }

// A loopback port nothing listens on: bound to pick a number, then closed.
inline int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "lpcaps") {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    do {
      path_ = base / (std::string(prefix) + "-" + std::to_string(rd()));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
