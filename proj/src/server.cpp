#include "vcsc/server.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "vcsc/error.hpp"

namespace vcsc {

namespace {

int status_of(Error::Kind kind) {
  switch (kind) {
    case Error::Kind::not_found:
      return 404;
    case Error::Kind::conflict:
      return 409;
    case Error::Kind::invalid_argument:
      return 400;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    auto body = nlohmann::json::parse(req.body);
    if (!body.is_object()) throw Error("request body must be a JSON object");
    return body;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
T field(const nlohmann::json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end()) throw Error(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("field '") + name + "' has the wrong type");
  }
}

/// Wraps a handler so library errors map onto HTTP status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, status_of(e.kind()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

HttpServer::HttpServer(AnnotationService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port), Error::Kind::io);
  }
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

void HttpServer::install_routes() {
  auto& svc = service_;

  server_->Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const auto id = svc.create_session(field<std::string>(body, "image_id"));
                  send_json(res, {{"session_id", id}}, 201);
                }));

  server_->Post(R"(/sessions/([^/]+)/suggest)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const auto cands = svc.suggest(req.matches[1], field<std::string>(body, "text"),
                                                 field<std::size_t>(body, "cursor"));
                  nlohmann::json out = nlohmann::json::array();
                  for (const auto& c : cands) out.push_back({{"text", c.text}, {"score", c.score}, {"rank", c.rank}});
                  send_json(res, {{"candidates", std::move(out)}});
                }));

  server_->Post(R"(/sessions/([^/]+)/snapshot)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  svc.store().record_snapshot(req.matches[1], field<std::string>(body, "text"),
                                              field<std::size_t>(body, "cursor"), field<double>(body, "ts"));
                  send_json(res, {{"ok", true}});
                }));

  server_->Post(R"(/sessions/([^/]+)/selection)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  svc.store().record_selection(req.matches[1], field<std::size_t>(body, "rank"),
                                               field<std::string>(body, "text"), field<double>(body, "ts"));
                  send_json(res, {{"ok", true}});
                }));

  server_->Post(R"(/sessions/([^/]+)/submit)",
                guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const auto stats =
                      svc.store().submit(req.matches[1], field<std::string>(body, "text"), field<double>(body, "ts"));
                  send_json(res, stats.to_json());
                }));

  server_->Get(R"(/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, svc.store().get(req.matches[1]).to_json());
               }));

  server_->Get("/export", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 ExportFilter filter;
                 if (req.has_param("closed")) {
                   const auto v = req.get_param_value("closed");
                   if (v != "true" && v != "false") throw Error("closed must be true or false");
                   filter.closed = v == "true";
                 }
                 if (req.has_param("mode")) filter.mode = session_mode_from_string(req.get_param_value("mode"));
                 if (req.has_param("image_id")) filter.image_id = req.get_param_value("image_id");
                 res.set_content(svc.store().export_jsonl(filter), "application/x-ndjson; charset=utf-8");
               }));

  server_->Get("/histogram", guarded([&svc](const httplib::Request&, httplib::Response& res) {
                 send_json(res, {{"selections_by_rank", svc.store().selection_histogram()}});
               }));

  const auto image_dir = options_.image_dir;
  server_->Get(R"(/images/([^/]+))", guarded([image_dir](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (image_dir.empty() || !std::filesystem::is_directory(image_dir)) {
                   throw Error("no image directory configured", Error::Kind::not_found);
                 }
                 for (const auto& entry : std::filesystem::directory_iterator(image_dir)) {
                   if (!entry.is_regular_file() || entry.path().stem().string() != id) continue;
                   std::ifstream in(entry.path(), std::ios::binary);
                   std::ostringstream bytes;
                   bytes << in.rdbuf();
                   res.set_content(bytes.str(), content_type_for(entry.path()));
                   return;
                 }
                 throw Error("no image for '" + id + "'", Error::Kind::not_found);
               }));
}

}  // namespace vcsc
