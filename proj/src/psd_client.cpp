#include "saife/psd_client.hpp"

#include <cctype>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "saife/errors.hpp"

namespace saife::ingest {

using nlohmann::json;

std::string token_from_env() {
    const char* v = std::getenv(kTokenEnvVar);
    return v ? std::string(v) : std::string();
}

HttplibTransport::HttplibTransport(std::string base_url) : base_url_(std::move(base_url)) {}

HttpResponse HttplibTransport::get(const std::string& path, const Params& params, const Headers& headers,
                                   std::chrono::milliseconds timeout) {
    httplib::Client client(base_url_);
    if (!client.is_valid()) throw TransportError("invalid base url " + base_url_, false);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Params p;
    for (const auto& [k, v] : params) p.emplace(k, v);
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client.Get(path, p, h);
    if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
        throw TransportError(httplib::to_string(err), timed_out);
    }
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) out.headers[k] = v;
    return out;
}

namespace {

std::string describe(const std::string& path, const HttpTransport::Params& params) {
    std::string s = "GET " + path;
    char sep = '?';
    for (const auto& [k, v] : params) {
        s += sep + k + "=" + v;
        sep = '&';
    }
    return s;
}

std::string header(const HttpResponse& r, const std::string& name) {
    for (const auto& [k, v] : r.headers) {
        if (k.size() != name.size()) continue;
        bool same = true;
        for (std::size_t i = 0; i < k.size() && same; ++i)
            same = std::tolower(static_cast<unsigned char>(k[i])) == std::tolower(static_cast<unsigned char>(name[i]));
        if (same) return v;
    }
    return {};
}

std::string hz(double mhz) { return std::to_string(std::llround(mhz * 1e6)); }

// One page, with retries on transport failures, 429 and 5xx.
HttpResponse get_with_retry(const ClientConfig& cfg, HttpTransport& transport, const HttpTransport::Params& params,
                            const HttpTransport::Headers& headers, int& retries) {
    const auto request = describe(cfg.path, params);
    const int attempts = std::max(cfg.max_attempts, 1);
    auto delay = cfg.base_delay;
    for (int attempt = 1;; ++attempt) {
        std::string failure;
        bool timed_out = false;
        try {
            auto res = transport.get(cfg.path, params, headers, cfg.timeout);
            if (res.status == 401 || res.status == 403)
                throw AuthError("authentication failed with HTTP " + std::to_string(res.status), request);
            if (res.status >= 200 && res.status < 300) return res;
            if (res.status != 429 && res.status < 500)
                throw FetchError("request rejected with HTTP " + std::to_string(res.status), request);
            failure = "HTTP " + std::to_string(res.status);
        } catch (const TransportError& e) {
            failure = e.what();
            timed_out = e.timed_out;
        }
        if (attempt >= attempts) {
            const auto what = failure + " after " + std::to_string(attempt) + " attempt(s)";
            if (timed_out) throw TimeoutError("request timed out: " + what, request);
            throw FetchError("transient failure persisted: " + what, request);
        }
        ++retries;
        if (cfg.log)
            cfg.log("retry " + std::to_string(attempt) + "/" + std::to_string(attempts - 1) + " after " + failure +
                    " (waiting " + std::to_string(delay.count()) + " ms) [" + request + "]");
        if (cfg.sleep)
            cfg.sleep(delay);
        else
            std::this_thread::sleep_for(delay);
        delay *= 2;
    }
}

}  // namespace

FetchResult fetch_psd(const ClientConfig& config, HttpTransport& transport, const std::string& sensor,
                      const BandSpec& band, TimeRange range, std::size_t rows, std::size_t cols) {
    band.validate();
    if (rows == 0) throw ConfigError("fetch_psd: rows per frame must be positive");
    if (range.stop < range.start) throw ConfigError("fetch_psd: time range ends before it starts");
    const std::size_t width = cols ? cols : band.bins();

    HttpTransport::Headers headers;
    if (!config.token.empty()) headers["Authorization"] = "Bearer " + config.token;

    FetchResult out;
    std::vector<float> pending;  // rows of the frame under construction
    std::int64_t pending_ts = 0, last_ts = INT64_MIN;
    std::string page;
    do {
        HttpTransport::Params params = {{"sensor", sensor},
                                        {"startFreq", hz(band.freq_start_mhz)},
                                        {"stopFreq", hz(band.freq_stop_mhz)},
                                        {"startTime", std::to_string(range.start)},
                                        {"stopTime", std::to_string(range.stop)},
                                        {"aggregation", config.aggregation}};
        if (!page.empty()) params.emplace_back("page", page);
        const auto request = describe(config.path, params);
        auto res = get_with_retry(config, transport, params, headers, out.retries);
        ++out.pages;

        json body;
        try {
            body = json::parse(res.body);
        } catch (const json::parse_error& e) {
            throw MalformedResponseError(std::string("response is not JSON: ") + e.what(), request);
        }
        if (!body.is_array()) throw MalformedResponseError("response is not a JSON array", request);
        for (std::size_t i = 0; i < body.size(); ++i) {
            const auto& rec = body[i];
            const auto where = "record " + std::to_string(i);
            if (!rec.is_object() || !rec.contains("timestamp") || !rec.contains("values") ||
                !rec["timestamp"].is_number() || !rec["values"].is_array())
                throw MalformedResponseError(where + " lacks a numeric timestamp or a values array", request);
            const auto ts = rec["timestamp"].get<std::int64_t>();
            if (ts < last_ts) throw MalformedResponseError(where + " is out of time order", request);
            last_ts = ts;
            const auto& values = rec["values"];
            if (values.size() != width)
                throw DimensionError("fetch_psd: " + where + " has " + std::to_string(values.size()) +
                                     " bins, expected " + std::to_string(width) + " [" + request + "]");
            if (pending.empty()) pending_ts = ts;
            for (const auto& v : values) {
                if (!v.is_number()) throw MalformedResponseError(where + " has a non-numeric value", request);
                pending.push_back(v.get<float>());
            }
            if (pending.size() == rows * width) {
                specgen::PsdFrame f;
                f.rows = rows;
                f.cols = width;
                f.band_id = band.band_id;
                f.db = std::move(pending);
                pending.clear();
                out.frames.push_back(std::move(f));
                out.timestamps.push_back(pending_ts);
            }
        }
        page = header(res, "X-Next-Page");
    } while (!page.empty());
    out.leftover_rows = pending.size() / width;
    return out;
}

}  // namespace saife::ingest
