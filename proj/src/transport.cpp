#include "driftrank/transport.hpp"

#include "driftrank/error.hpp"
#include "driftrank/providers.hpp"

#include <httplib.h>

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

namespace driftrank {

using nlohmann::json;

void check_reply(const json& reply, std::string_view endpoint) {
    if (!reply.is_object()) {
        fail(ErrorKind::Provider, std::string(endpoint) + ": reply is not a JSON object");
    }
    if (const auto it = reply.find("error"); it != reply.end()) {
        fail(ErrorKind::Provider, std::string(endpoint) + ": provider error: " +
                                      (it->is_string() ? it->get<std::string>() : it->dump()));
    }
}

// ---------------------------------------------------------------------------
// Subprocess

struct SubprocessEndpoint::Impl {
    pid_t pid = -1;
    int fd = -1;
    std::string pending;
    std::mutex mutex;
    EndpointOptions options;

    ~Impl() {
        if (fd >= 0) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
        }
        if (pid > 0) {
            // Give the child a moment to see EOF before forcing it.
            for (int i = 0; i < 50; ++i) {
                if (::waitpid(pid, nullptr, WNOHANG) == pid) {
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            ::kill(pid, SIGKILL);
            ::waitpid(pid, nullptr, 0);
        }
    }
};

SubprocessEndpoint::SubprocessEndpoint(std::string command, EndpointOptions options)
    : impl_(std::make_unique<Impl>()), command_(std::move(command)) {
    impl_->options = options;
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
        fail(ErrorKind::Provider, "socketpair failed: " + std::string(std::strerror(errno)));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(sv[0]);
        ::close(sv[1]);
        fail(ErrorKind::Provider, "fork failed: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        ::dup2(sv[1], STDIN_FILENO);
        ::dup2(sv[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(sv[1]);
    impl_->pid = pid;
    impl_->fd = sv[0];
}

SubprocessEndpoint::~SubprocessEndpoint() = default;

json SubprocessEndpoint::call(const json& request) {
    std::lock_guard lock(impl_->mutex);
    const auto where = describe();
    const std::string line = request.dump() + '\n';
    std::size_t sent = 0;
    while (sent < line.size()) {
        const auto n = ::send(impl_->fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            fail(ErrorKind::Provider, where + ": write failed: " + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
    const auto deadline = std::chrono::steady_clock::now() + impl_->options.timeout;
    for (;;) {
        if (const auto nl = impl_->pending.find('\n'); nl != std::string::npos) {
            std::string reply_line = impl_->pending.substr(0, nl);
            impl_->pending.erase(0, nl + 1);
            json reply;
            try {
                reply = json::parse(reply_line);
            } catch (const json::parse_error& e) {
                fail(ErrorKind::Provider, where + ": malformed reply: " + e.what());
            }
            check_reply(reply, where);
            return reply;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            fail(ErrorKind::Provider, where + ": timed out waiting for reply");
        }
        pollfd pfd{impl_->fd, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0 && errno == EINTR) {
            continue;
        }
        if (ready <= 0) {
            fail(ErrorKind::Provider, where + ": timed out waiting for reply");
        }
        char buf[65536];
        const auto n = ::recv(impl_->fd, buf, sizeof(buf), 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            fail(ErrorKind::Provider, where + ": provider closed the connection");
        }
        impl_->pending.append(buf, static_cast<std::size_t>(n));
    }
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpEndpoint::Impl {
    std::unique_ptr<httplib::Client> client;
    std::string path;
    std::mutex mutex;
};

HttpEndpoint::HttpEndpoint(std::string url, EndpointOptions options)
    : impl_(std::make_unique<Impl>()), url_(std::move(url)) {
    constexpr std::string_view scheme = "http://";
    if (url_.rfind(scheme, 0) != 0) {
        fail(ErrorKind::Config, "only http:// endpoints are supported: " + url_);
    }
    const auto rest = std::string_view(url_).substr(scheme.size());
    const auto slash = rest.find('/');
    const auto host = std::string(rest.substr(0, slash));
    impl_->path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (host.empty()) {
        fail(ErrorKind::Config, "endpoint URL has no host: " + url_);
    }
    impl_->client = std::make_unique<httplib::Client>("http://" + host);
    const auto secs = options.timeout.count() / 1000;
    const auto usecs = (options.timeout.count() % 1000) * 1000;
    impl_->client->set_connection_timeout(secs, usecs);
    impl_->client->set_read_timeout(secs, usecs);
    impl_->client->set_write_timeout(secs, usecs);
}

HttpEndpoint::~HttpEndpoint() = default;

json HttpEndpoint::call(const json& request) {
    std::lock_guard lock(impl_->mutex);
    auto res = impl_->client->Post(impl_->path, request.dump(), "application/json");
    if (!res) {
        fail(ErrorKind::Provider, url_ + ": request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        fail(ErrorKind::Provider, url_ + ": HTTP status " + std::to_string(res->status));
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Provider, url_ + ": malformed reply: " + e.what());
    }
    check_reply(reply, url_);
    return reply;
}

// ---------------------------------------------------------------------------
// In-process

FunctionEndpoint::FunctionEndpoint(Handler handler, std::string name)
    : handler_(std::move(handler)), name_(std::move(name)) {}

json FunctionEndpoint::call(const json& request) {
    json reply;
    try {
        reply = handler_(request);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::Provider, name_ + ": " + e.what());
    }
    check_reply(reply, name_);
    return reply;
}

std::unique_ptr<Endpoint> open_endpoint(std::string_view spec, EndpointOptions options) {
    if (spec.rfind("exec:", 0) == 0) {
        return std::make_unique<SubprocessEndpoint>(std::string(spec.substr(5)), options);
    }
    if (spec.rfind("http://", 0) == 0) {
        return std::make_unique<HttpEndpoint>(std::string(spec), options);
    }
    if (spec.rfind("builtin:", 0) == 0) {
        auto provider = std::make_shared<MockProvider>(MockConfig::parse(spec.substr(8)));
        return std::make_unique<FunctionEndpoint>(
            [provider](const json& request) { return provider->handle(request); }, std::string(spec));
    }
    fail(ErrorKind::Config, "unrecognized endpoint '" + std::string(spec) +
                                "' (expected exec:, http:// or builtin:)");
}

} // namespace driftrank
