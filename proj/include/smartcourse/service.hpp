#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "smartcourse/app.hpp"
#include "smartcourse/error.hpp"

namespace smartcourse::service {

enum class Access { Public, Student, Instructor, Administrator, AnyAccount };

struct Route {
  std::string_view method;
  std::string_view path;  // {name} marks a path parameter
  Access access;
};

/// Every route the server registers, with who may call it. Handlers are
/// guarded by looking themselves up here, so this table is the policy.
std::span<const Route> routes();

bool permits(Access access, std::optional<store::Role> role) noexcept;

/// Status code a domain error maps to.
int http_status(Errc code) noexcept;

/// JSON-over-HTTP front end on cpp-httplib. Sessions are random bearer
/// tokens held in memory.
class Server {
 public:
  explicit Server(App& app);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Port 0 picks an ephemeral port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  /// bind + run on a background thread; returns once accepting.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace smartcourse::service
