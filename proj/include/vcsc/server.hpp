#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "vcsc/session.hpp"

namespace httplib {
class Server;
}

namespace vcsc {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  /// Directory holding image files named by image id (any extension).
  std::filesystem::path image_dir;
};

/// HTTP+JSON front end over an AnnotationService.
///
///   POST /sessions                 {image_id}          -> {session_id}
///   POST /sessions/{id}/suggest    {text, cursor}      -> {candidates}
///   POST /sessions/{id}/snapshot   {text, cursor, ts}
///   POST /sessions/{id}/selection  {rank, text, ts}
///   POST /sessions/{id}/submit     {text, ts}          -> SessionStats
///   GET  /sessions/{id}                                -> Session
///   GET  /images/{id}
///   GET  /export?closed=&mode=&image_id=               -> JSON-lines
///
/// Errors answer {"error": message} with 400, 404 or 409.
class HttpServer {
 public:
  HttpServer(AnnotationService& service, ServerOptions options);
  ~HttpServer();

  /// Binds the socket; returns the bound port.
  int bind();
  /// Serves until stop(). Call bind() first.
  void listen();
  void stop();

 private:
  void install_routes();

  AnnotationService& service_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace vcsc
