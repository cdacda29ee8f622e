#pragma once

// HTTP/1.1 binding for Service.

#include "shortcutlens/service.hpp"

#include <httplib.h>

#include <string>

namespace shortcutlens {

/// Routes every GET/POST to `svc`. The caller owns the server lifetime.
inline void bind_routes(httplib::Server& server, Service& svc) {
  auto adapt = [&svc](const httplib::Request& req, httplib::Response& res) {
    Query q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    auto r = svc.handle(req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(".*", adapt);
  server.Post(".*", adapt);
}

/// Blocks serving on host:port. Returns false when the port cannot be bound.
inline bool serve(Service& svc, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, svc);
  return server.listen(host, port);
}

}  // namespace shortcutlens
