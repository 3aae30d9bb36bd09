#pragma once

// Client for an aggregated-PSD sensor API.
//
// Request: GET <path>?sensor=..&startFreq=..&stopFreq=..&startTime=..&stopTime=..&aggregation=..[&page=..]
//   frequencies in Hz, times in Unix seconds; `Authorization: Bearer <token>`
//   when a token is configured.
// Response: 200 with a JSON array of {"timestamp": <seconds>, "values": [dB...]},
//   one record per sweep (time row). A non-empty `X-Next-Page` header names
//   the `page` value of the next request.
// Consecutive groups of `rows` records become one frame.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "saife/ingest.hpp"
#include "saife/specgen.hpp"

namespace saife::ingest {

inline constexpr const char* kTokenEnvVar = "SAIFE_API_TOKEN";

struct HttpResponse {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

// Raised by transports for failures below HTTP (no status line).
struct TransportError : std::runtime_error {
    TransportError(const std::string& what, bool timed_out) : std::runtime_error(what), timed_out(timed_out) {}
    bool timed_out;
};

class HttpTransport {
public:
    using Params = std::vector<std::pair<std::string, std::string>>;
    using Headers = std::map<std::string, std::string>;
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const std::string& path, const Params& params, const Headers& headers,
                             std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport for plain http:// endpoints.
class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(std::string base_url);
    HttpResponse get(const std::string& path, const Params& params, const Headers& headers,
                     std::chrono::milliseconds timeout) override;

private:
    std::string base_url_;
};

struct ClientConfig {
    std::string base_url = "http://127.0.0.1:8080";
    std::string path = "/api/v1/spectrum/aggregated";
    std::string aggregation = "mean";
    std::string token;  // empty: no Authorization header
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};  // doubled after every failed attempt
    std::chrono::milliseconds timeout{10000};
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
    std::function<void(const std::string&)> log;           // retry notices; may be empty
};

// Reads the API token from SAIFE_API_TOKEN (empty when unset).
std::string token_from_env();

struct TimeRange {
    std::int64_t start = 0;
    std::int64_t stop = 0;
};

struct FetchResult {
    std::vector<specgen::PsdFrame> frames;  // in time order
    std::vector<std::int64_t> timestamps;   // first row's timestamp per frame
    int retries = 0;
    int pages = 0;
    std::size_t leftover_rows = 0;          // trailing rows that did not fill a frame
};

// `cols` is the expected value count per record; 0 means band.bins().
// Errors: AuthError (401/403), MalformedResponseError, TimeoutError,
// DimensionError on a record of the wrong width, FetchError otherwise.
FetchResult fetch_psd(const ClientConfig& config, HttpTransport& transport, const std::string& sensor,
                      const BandSpec& band, TimeRange range, std::size_t rows, std::size_t cols = 0);

}  // namespace saife::ingest
