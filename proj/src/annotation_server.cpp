#include "socialveil/annotation_server.hpp"

#include <httplib.h>

namespace socialveil {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, Json{{"error", message}});
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  httplib::Server& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  s.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service_.health());
  });

  s.Get("/api/taxonomy", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, Json{{"definitions", service_.definitions_panel()},
                             {"labels", annotation_labels()}});
  });

  s.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("annotator") || req.get_param_value("annotator").empty()) {
      send_error(res, 400, "missing query parameter 'annotator'");
      return;
    }
    try {
      NextTask t = service_.next_task(req.get_param_value("annotator"));
      Json body{{"status", to_string(t.kind)}};
      if (t.kind == NextTask::Kind::kTask) body["task"] = std::move(t.payload);
      send_json(res, 200, body);
    } catch (const AnnotationError& e) {
      send_error(res, e.status(), e.what());
    }
  });

  s.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
    AnnotationRecord record;
    try {
      record = parse_json(req.body, "request body").get<AnnotationRecord>();
    } catch (const std::exception& e) {
      send_error(res, 400, e.what());
      return;
    }
    try {
      AnnotationRecord stored = service_.submit(std::move(record));
      send_json(res, 201, Json{{"status", "stored"}, {"record", stored}});
    } catch (const AnnotationError& e) {
      send_error(res, e.status(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  s.Get("/api/agreement", [this](const httplib::Request&, httplib::Response& res) {
    try {
      send_json(res, 200, agreement_to_json(service_.agreement_report()));
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  s.Get("/api/export", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(service_.export_log(), "application/x-ndjson");
  });
}

AnnotationServer::~AnnotationServer() { stop(); }

bool AnnotationServer::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

int AnnotationServer::bind_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool AnnotationServer::run() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void AnnotationServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace socialveil
