#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

namespace driftrank {

/// A model backend reached through JSON messages. Implementations throw
/// Error(ErrorKind::Provider) on timeouts, transport failures, malformed
/// replies and replies carrying an "error" field.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual nlohmann::json call(const nlohmann::json& request) = 0;
    virtual std::string describe() const = 0;
};

struct EndpointOptions {
    std::chrono::milliseconds timeout{60000};
};

/// Line-delimited JSON with a long-lived child process (`/bin/sh -c command`).
/// One request line in, one reply line out. Calls are serialized.
class SubprocessEndpoint final : public Endpoint {
public:
    explicit SubprocessEndpoint(std::string command, EndpointOptions options = {});
    ~SubprocessEndpoint() override;
    SubprocessEndpoint(const SubprocessEndpoint&) = delete;
    SubprocessEndpoint& operator=(const SubprocessEndpoint&) = delete;

    nlohmann::json call(const nlohmann::json& request) override;
    std::string describe() const override { return "exec:" + command_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string command_;
};

/// HTTP POST of the request body to a fixed URL.
class HttpEndpoint final : public Endpoint {
public:
    explicit HttpEndpoint(std::string url, EndpointOptions options = {});
    ~HttpEndpoint() override;

    nlohmann::json call(const nlohmann::json& request) override;
    std::string describe() const override { return url_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string url_;
};

/// In-process handler; used for the bundled providers and in tests.
class FunctionEndpoint final : public Endpoint {
public:
    using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

    FunctionEndpoint(Handler handler, std::string name);

    nlohmann::json call(const nlohmann::json& request) override;
    std::string describe() const override { return name_; }

private:
    Handler handler_;
    std::string name_;
};

/// Endpoint from a spec string:
///   exec:<shell command>   child process speaking line-delimited JSON
///   http://host:port/path  HTTP POST
///   builtin:<options>      bundled mock provider in-process (see MockConfig)
std::unique_ptr<Endpoint> open_endpoint(std::string_view spec, EndpointOptions options = {});

/// Throws Error(Provider) when the reply is not an object or has "error".
void check_reply(const nlohmann::json& reply, std::string_view endpoint);

} // namespace driftrank
