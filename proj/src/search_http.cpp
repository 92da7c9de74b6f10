// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <cstdlib>

#include "ata/error.hpp"
#include "ata/planner.hpp"

namespace ata {

HttpSearch::HttpSearch(std::string endpoint, std::string api_key_env)
    : endpoint_(std::move(endpoint)), api_key_env_(std::move(api_key_env)) {}

std::vector<SearchHit> HttpSearch::search(const std::string& query, int limit) {
  const auto scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::search_unavailable, "search endpoint '" + endpoint_ + "' is not an absolute URL");
  }
  const auto path_start = endpoint_.find('/', scheme_end + 3);
  const std::string base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  httplib::Client client(base);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);
  httplib::Headers headers;
  if (!api_key_env_.empty()) {
    if (const char* key = std::getenv(api_key_env_.c_str())) headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const httplib::Params params = {{"q", query}, {"n", std::to_string(limit)}};
  auto res = client.Get(path, params, headers);
  if (!res) throw Error(ErrorCode::search_unavailable, "search-backend-unavailable: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::search_unavailable, "search-backend-unavailable: HTTP " + std::to_string(res->status));
  }
  const json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("results") || !body["results"].is_array()) {
    throw Error(ErrorCode::search_unavailable, "search-backend-unavailable: malformed response");
  }
  std::vector<SearchHit> hits;
  for (const auto& r : body["results"]) {
    if (static_cast<int>(hits.size()) >= limit) break;
    SearchHit hit;
    hit.title = r.value("title", std::string{});
    hit.snippet = r.value("snippet", std::string{});
    hit.url = r.value("url", std::string{});
    const std::string kind = r.value("kind", std::string("paper"));
    hit.kind = kind == "dataset" ? SourceKind::dataset : kind == "bug_report" ? SourceKind::bug_report : SourceKind::paper;
    hits.push_back(std::move(hit));
  }
  return hits;
}

}  // namespace ata
