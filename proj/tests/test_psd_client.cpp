#include <atomic>
#include <mutex>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "saife/errors.hpp"
#include "saife/psd_client.hpp"

using namespace saife;
using namespace saife::ingest;
using nlohmann::json;

namespace {

// A local sensor API. Handlers are swapped per test; requests are recorded.
class MockApi {
public:
    MockApi() {
        server_.Get("/api/v1/spectrum/aggregated", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            requests_.push_back(req);
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockApi() {
        server_.stop();
        thread_.join();
    }

    void on_get(httplib::Server::Handler h) { handler_ = std::move(h); }
    std::size_t request_count() {
        std::lock_guard lock(mu_);
        return requests_.size();
    }
    httplib::Request request(std::size_t i) {
        std::lock_guard lock(mu_);
        return requests_.at(i);
    }

    ClientConfig config() const {
        ClientConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_);
        c.sleep = [](std::chrono::milliseconds) {};
        c.timeout = std::chrono::milliseconds(2000);
        return c;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mu_;
    std::vector<httplib::Request> requests_;
    httplib::Server::Handler handler_;
};

const BandSpec kBand{3, 100.0, 100.4, 100.0, "test"};  // 4 bins

json records(std::int64_t t0, int n, std::size_t width) {
    json arr = json::array();
    for (int i = 0; i < n; ++i) {
        json values = json::array();
        for (std::size_t c = 0; c < width; ++c) values.push_back(-90.0 + (t0 + i) + 0.25 * static_cast<double>(c));
        arr.push_back({{"timestamp", t0 + i}, {"values", values}});
    }
    return arr;
}

}  // namespace

TEST(PsdClient, FollowsPagesInOrder) {
    MockApi api;
    api.on_get([](const httplib::Request& req, httplib::Response& res) {
        const bool second = req.has_param("page");
        if (!second) res.set_header("X-Next-Page", "p2");
        res.set_content(records(second ? 3 : 0, 3, 4).dump(), "application/json");
    });
    HttplibTransport transport(api.config().base_url);
    const auto r = fetch_psd(api.config(), transport, "s1", kBand, {0, 100}, 1);
    ASSERT_EQ(r.frames.size(), 6u);
    EXPECT_EQ(r.pages, 2);
    EXPECT_EQ(r.retries, 0);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(r.timestamps[i], static_cast<std::int64_t>(i));
        EXPECT_FLOAT_EQ(r.frames[i].at(0, 0), -90.0f + static_cast<float>(i));
        EXPECT_EQ(r.frames[i].band_id, 3);
    }
    EXPECT_EQ(api.request(1).get_param_value("page"), "p2");
    EXPECT_EQ(api.request(0).get_param_value("startFreq"), "100000000");
    EXPECT_EQ(api.request(0).get_param_value("stopFreq"), "100400000");
    EXPECT_EQ(api.request(0).get_param_value("sensor"), "s1");
}

TEST(PsdClient, GroupsRowsIntoFrames) {
    MockApi api;
    api.on_get([](const httplib::Request&, httplib::Response& res) {
        res.set_content(records(10, 7, 4).dump(), "application/json");
    });
    HttplibTransport transport(api.config().base_url);
    const auto r = fetch_psd(api.config(), transport, "s1", kBand, {0, 100}, 3);
    ASSERT_EQ(r.frames.size(), 2u);
    EXPECT_EQ(r.leftover_rows, 1u);
    EXPECT_EQ(r.timestamps, (std::vector<std::int64_t>{10, 13}));
    EXPECT_EQ(r.frames[1].rows, 3u);
    EXPECT_FLOAT_EQ(r.frames[1].at(2, 1), -90.0f + 15.0f + 0.25f);
}

TEST(PsdClient, RetriesServerErrorOnce) {
    MockApi api;
    std::atomic<int> calls{0};
    api.on_get([&](const httplib::Request&, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 500;
            return;
        }
        res.set_content(records(0, 2, 4).dump(), "application/json");
    });
    std::vector<std::string> log;
    std::vector<std::chrono::milliseconds> waits;
    auto cfg = api.config();
    cfg.log = [&](const std::string& m) { log.push_back(m); };
    cfg.sleep = [&](std::chrono::milliseconds d) { waits.push_back(d); };
    HttplibTransport transport(cfg.base_url);
    const auto r = fetch_psd(cfg, transport, "s1", kBand, {0, 100}, 1);
    EXPECT_EQ(r.frames.size(), 2u);
    EXPECT_EQ(r.retries, 1);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_NE(log[0].find("HTTP 500"), std::string::npos);
    EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{cfg.base_delay}));
}

TEST(PsdClient, PersistentFailureGivesUp) {
    MockApi api;
    api.on_get([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    auto cfg = api.config();
    cfg.max_attempts = 3;
    std::vector<std::chrono::milliseconds> waits;
    cfg.sleep = [&](std::chrono::milliseconds d) { waits.push_back(d); };
    HttplibTransport transport(cfg.base_url);
    EXPECT_THROW(fetch_psd(cfg, transport, "s1", kBand, {0, 100}, 1), FetchError);
    EXPECT_EQ(api.request_count(), 3u);
    EXPECT_EQ(waits, (std::vector<std::chrono::milliseconds>{cfg.base_delay, cfg.base_delay * 2}));
}

TEST(PsdClient, WrongWidthNamesBoth) {
    MockApi api;
    api.on_get([](const httplib::Request&, httplib::Response& res) {
        res.set_content(records(0, 1, 5).dump(), "application/json");
    });
    HttplibTransport transport(api.config().base_url);
    try {
        fetch_psd(api.config(), transport, "s1", kBand, {0, 100}, 1);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("has 5 bins"), std::string::npos) << what;
        EXPECT_NE(what.find("expected 4"), std::string::npos) << what;
    }
}

TEST(PsdClient, Unauthorized) {
    MockApi api;
    api.on_get([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    auto cfg = api.config();
    cfg.token = "secret";
    HttplibTransport transport(cfg.base_url);
    EXPECT_THROW(fetch_psd(cfg, transport, "s1", kBand, {0, 100}, 1), AuthError);
    EXPECT_EQ(api.request_count(), 1u);
    EXPECT_EQ(api.request(0).get_header_value("Authorization"), "Bearer secret");
}

TEST(PsdClient, MalformedBodies) {
    MockApi api;
    HttplibTransport transport(api.config().base_url);
    for (const char* body : {"not json", "{\"a\": 1}", "[{\"timestamp\": 1}]", "[{\"timestamp\": 1, \"values\": [\"x\", 1, 2, 3]}]",
                             "[{\"timestamp\": 5, \"values\": [1,2,3,4]}, {\"timestamp\": 4, \"values\": [1,2,3,4]}]"}) {
        api.on_get([body](const httplib::Request&, httplib::Response& res) { res.set_content(body, "application/json"); });
        EXPECT_THROW(fetch_psd(api.config(), transport, "s1", kBand, {0, 100}, 1), MalformedResponseError) << body;
    }
}

TEST(PsdClient, Timeout) {
    MockApi api;
    api.on_get([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content("[]", "application/json");
    });
    auto cfg = api.config();
    cfg.timeout = std::chrono::milliseconds(100);
    cfg.max_attempts = 1;
    HttplibTransport transport(cfg.base_url);
    EXPECT_THROW(fetch_psd(cfg, transport, "s1", kBand, {0, 100}, 1), TimeoutError);
}

TEST(PsdClient, RejectsBadArguments) {
    MockApi api;
    HttplibTransport transport(api.config().base_url);
    EXPECT_THROW(fetch_psd(api.config(), transport, "s1", kBand, {0, 100}, 0), ConfigError);
    EXPECT_THROW(fetch_psd(api.config(), transport, "s1", kBand, {100, 0}, 1), ConfigError);
    EXPECT_EQ(api.request_count(), 0u);
}

TEST(PsdClient, TokenFromEnvironment) {
    ::setenv(kTokenEnvVar, "abc", 1);
    EXPECT_EQ(token_from_env(), "abc");
    ::unsetenv(kTokenEnvVar);
    EXPECT_EQ(token_from_env(), "");
}
