#pragma once

#include <memory>
#include <string>

#include "socialveil/annotation.hpp"

namespace httplib {
class Server;
}

namespace socialveil {

// REST front end over an AnnotationService:
//   GET  /api/health
//   GET  /api/tasks/next?annotator=ID
//   POST /api/annotations
//   GET  /api/agreement
//   GET  /api/export
//   GET  /api/taxonomy
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service);
  ~AnnotationServer();

  // Binds and serves until stop(); false when the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it (or -1); serve with run().
  int bind_any_port(const std::string& host);
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  AnnotationService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace socialveil
