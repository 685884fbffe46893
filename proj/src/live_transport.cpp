// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <regex>

#include <httplib.h>

#include "patchfuse/errors.hpp"
#include "patchfuse/harvester.hpp"

namespace patchfuse {

HttpResponse LiveTransport::get(const std::string& url, const std::map<std::string, std::string>& headers) {
  static const std::regex split(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, split)) throw ConfigError("unsupported URL '" + url + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https://", 0) == 0) throw ConfigError("built without TLS; cannot fetch " + url);
#endif
  httplib::Client client(m[1].str());
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_follow_location(true);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Get(path, h);
  HttpResponse out;
  if (!res) return out;  // status 0: retried by the caller
  out.status = res->status;
  out.body = res->body;
  for (const auto& [k, v] : res->headers) {
    std::string key = k;
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.headers[key] = v;
  }
  return out;
}

}  // namespace patchfuse
