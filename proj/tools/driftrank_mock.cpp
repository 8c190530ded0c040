// Deterministic model backend for tests and demos.
//
//   driftrank-mock 'scorer=oracle,qrels=q.txt'          line-delimited JSON on stdin/stdout
//   driftrank-mock --serve 127.0.0.1:8089 'embed=hash'  HTTP POST, any path
#include "driftrank/error.hpp"
#include "driftrank/providers.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <iostream>
#include <string>

using nlohmann::json;

int main(int argc, char** argv) {
    CLI::App app{"driftrank-mock: deterministic embedding and scoring backend"};
    std::string options;
    std::string serve;
    app.add_option("options", options, "Mock options, e.g. scorer=oracle,qrels=qrels.txt,embed=hash,seed=7");
    app.add_option("--serve", serve, "Serve HTTP on host:port instead of stdin/stdout");
    CLI11_PARSE(app, argc, argv);

    std::unique_ptr<driftrank::MockProvider> provider;
    try {
        provider = std::make_unique<driftrank::MockProvider>(driftrank::MockConfig::parse(options));
    } catch (const std::exception& e) {
        std::cerr << "driftrank-mock: " << e.what() << '\n';
        return 1;
    }

    if (!serve.empty()) {
        const auto colon = serve.rfind(':');
        if (colon == std::string::npos) {
            std::cerr << "driftrank-mock: --serve expects host:port\n";
            return 1;
        }
        const auto host = serve.substr(0, colon);
        const int port = std::stoi(serve.substr(colon + 1));
        httplib::Server server;
        server.Post(R"(/.*)", [&](const httplib::Request& req, httplib::Response& res) {
            json reply;
            try {
                reply = provider->handle(json::parse(req.body));
            } catch (const json::exception& e) {
                reply = {{"error", std::string("malformed request: ") + e.what()}};
            }
            res.set_content(reply.dump(), "application/json");
        });
        if (!server.listen(host, port)) {
            std::cerr << "driftrank-mock: cannot listen on " << serve << '\n';
            return 2;
        }
        return 0;
    }

    std::ios::sync_with_stdio(false);
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) {
            continue;
        }
        json reply;
        try {
            reply = provider->handle(json::parse(line));
        } catch (const json::exception& e) {
            reply = {{"error", std::string("malformed request: ") + e.what()}};
        }
        std::cout << reply.dump() << '\n' << std::flush;
    }
    return 0;
}
