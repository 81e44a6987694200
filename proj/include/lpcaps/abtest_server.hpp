#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "lpcaps/abtest.hpp"

namespace httplib {
class Server;
}

namespace lpcaps::abtest {

struct ServerOptions {
  /// Directory holding <sample_id>.<ext> clips served under /audio/.
  std::optional<std::filesystem::path> audio_dir;
  /// Static rater UI bundle mounted at /.
  std::optional<std::filesystem::path> static_dir;
  std::size_t session_size = 20;
};

/// HTTP front end over one or more StudyStores.
///
///   GET  /study/{id}/session?rater={rid}   assigned questions, blinded
///   GET  /audio/{sample_id}                 clip file
///   POST /study/{id}/responses              {rater_id, question_id, q1_choice, q2_choice}
///   GET  /study/{id}/results                aggregate counts and percentages
///
/// Errors are {"error": {"code", "message"}} with a matching HTTP status.
/// Session payloads carry only caption_a / caption_b, never the method name
/// or the ground-truth slot.
class StudyServer {
 public:
  explicit StudyServer(ServerOptions options = {});
  ~StudyServer();

  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  void add_study(std::unique_ptr<StudyStore> store);

  /// Binds to an ephemeral port and returns it; -1 on failure.
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  StudyStore* store(const std::string& study_id) const;

 private:
  void install_routes();

  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::map<std::string, std::unique_ptr<StudyStore>> stores_;
};

/// HTTP status for an error code raised by the study store.
int status_for(const std::string& code);

}  // namespace lpcaps::abtest
