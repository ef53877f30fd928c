#include <httplib.h>

#include <cmath>

#include "rchat/errors.hpp"
#include "rchat/model_client.hpp"

namespace rchat {

Transport make_http_transport(const ProviderConfig& cfg) {
  return [cfg](const std::string& path, const std::string& body) -> TransportResponse {
    httplib::Client client(cfg.base_url);
    const auto secs = static_cast<time_t>(std::floor(cfg.timeout_seconds));
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - std::floor(cfg.timeout_seconds)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (cfg.api_key) headers.emplace("Authorization", "Bearer " + *cfg.api_key);

    httplib::Result res = body.empty() ? client.Get(path, headers)
                                       : client.Post(path, headers, body, "application/json");
    TransportResponse out;
    if (!res) {
      const auto err = res.error();
      out.timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                      err == httplib::Error::Write;
      out.body = httplib::to_string(err);
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  };
}

}  // namespace rchat
