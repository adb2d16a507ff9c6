#include <charconv>
#include <functional>

#include <httplib.h>

#include "promptgate/error.hpp"
#include "promptgate/gateway.hpp"

namespace promptgate {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  reply(res, status, {{"error", kind}, {"message", message}});
}

// Maps the library's exception types onto status codes.
void guarded(httplib::Response& res, const std::function<void()>& body) {
  try {
    body();
  } catch (const DuplicateError& e) {
    reply_error(res, 409, "duplicate", e.what());
  } catch (const NotFound& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const InvalidArgument& e) {
    reply_error(res, 400, "invalid_argument", e.what());
  } catch (const ParseError& e) {
    reply_error(res, 400, "parse_error", e.what());
  } catch (const nlohmann::json::exception& e) {
    reply_error(res, 400, "invalid_json", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto doc = nlohmann::json::parse(req.body);
  if (!doc.is_object()) throw InvalidArgument("request body must be a JSON object");
  return doc;
}

ClassifyRequest classify_request(const httplib::Request& req) {
  const auto doc = parse_body(req);
  ClassifyRequest out;
  if (!doc.contains("prompt") || !doc["prompt"].is_string()) throw InvalidArgument("'prompt' must be a string");
  out.prompt = doc["prompt"].get<std::string>();
  if (doc.contains("n") && !doc["n"].is_null()) {
    if (!doc["n"].is_number_unsigned()) throw InvalidArgument("'n' must be a positive integer");
    out.n = doc["n"].get<std::size_t>();
  }
  if (doc.contains("strategy") && !doc["strategy"].is_null()) {
    out.strategy = parse_strategy(doc["strategy"].get<std::string>());
  }
  if (doc.contains("request_seed")) out.request_seed = doc["request_seed"].get<std::uint64_t>();
  if (req.has_header(kRequestSeedHeader)) {
    const auto text = req.get_header_value(kRequestSeedHeader);
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      throw InvalidArgument(std::string(kRequestSeedHeader) + " must be an unsigned integer");
    }
    out.request_seed = seed;
  }
  return out;
}

}  // namespace

struct HttpGateway::Impl {
  GatewayService& service;
  httplib::Server server;
};

HttpGateway::HttpGateway(GatewayService& service) : impl_(new Impl{service, {}}) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.Post("/v1/classify", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, svc.classify(classify_request(req)).to_json()); });
  });
  srv.Post("/v1/update", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto doc = parse_body(req);
      UpdateRequest u;
      u.dataset_path = doc.at("dataset_path").get<std::string>();
      u.dataset_tag = doc.at("dataset_tag").get<std::string>();
      u.backend = doc.at("backend");
      u.member_id = doc.value("member_id", std::string());
      reply(res, 200, svc.handle_update(u).to_json());
    });
  });
  srv.Post("/v1/recalibrate", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, svc.recalibrate().to_json()); });
  });
  srv.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, svc.health()); });
  });
  srv.Get("/v1/state", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, svc.state()); });
  });
}

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpGateway::serve() { impl_->server.listen_after_bind(); }

void HttpGateway::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace promptgate
