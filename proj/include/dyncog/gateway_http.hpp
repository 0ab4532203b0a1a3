#pragma once

#include <cstdlib>
#include <string>

// gateway.hpp pulls in Eigen; it must come before httplib, whose <resolv.h> defines _res.
#include "dyncog/gateway.hpp"

#include <httplib.h>

namespace dyncog {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "qwen3-vl";
  std::string api_key_env = "DYNCOG_API_KEY";  // variable name; the key itself never touches disk
  double timeout_s = 60.0;
};

/// Chat-completion request body:
///   {"model": ..., "temperature": 0,
///    "messages": [{"role": "user", "content": [
///        {"type": "text", "text": ...},
///        {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}, ...]}]}
/// The reply text is read from choices[0].message.content.
inline json chat_request_body(const RequestPayload& request, const std::string& model) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.text}});
  for (const auto& f : request.frames) {
    const auto bytes = read_binary_file(f);
    const std::string mime = detail::has_png_signature(bytes) ? "image/png" : "image/x-portable-anymap";
    content.push_back(
        {{"type", "image_url"}, {"image_url", {{"url", "data:" + mime + ";base64," + base64_encode(bytes)}}}});
  }
  return {{"model", model}, {"temperature", 0}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const RequestPayload& request, const std::string&) override {
    httplib::Client client(cfg_.base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const auto res =
        client.Post("/v1/chat/completions", headers, chat_request_body(request, cfg_.model).dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
        throw Error(Errc::timeout, "request to " + cfg_.base_url + " timed out (" + httplib::to_string(err) + ")");
      throw Error(Errc::transport_error, "request to " + cfg_.base_url + " failed: " + httplib::to_string(err));
    }
    if (res->status != 200)
      throw Error(Errc::transport_error, "endpoint returned HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::transport_error, std::string("unexpected response body: ") + e.what());
    }
  }

 private:
  EndpointConfig cfg_;
};

}  // namespace dyncog
