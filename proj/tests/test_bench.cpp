#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sstream>

#include "ovlm/bench.hpp"
#include "test_util.hpp"

using namespace ovlm;

TEST_CASE("quantile stats with linear interpolation") {
    MetricStats s = compute_stats({5, 1, 4, 2, 3});
    CHECK(s.median == doctest::Approx(3));
    CHECK(s.p10 == doctest::Approx(1.4));
    CHECK(s.p90 == doctest::Approx(4.6));

    MetricStats one = compute_stats({7});
    CHECK(one.median == doctest::Approx(7));
    CHECK(one.p10 == doctest::Approx(7));
    CHECK(one.p90 == doctest::Approx(7));

    MetricStats none = compute_stats({});  // all-invalid configs report zeros
    CHECK(none.median == 0);
    CHECK(none.p10 == 0);
    CHECK(none.p90 == 0);
}

TEST_CASE("single-shot measurements return positive numbers") {
    ModelConfig cfg = ovlm_test::tiny_config();
    Weights w = init_weights(cfg, 3);
    Image img = ovlm_test::random_image(cfg.vision.image_size, 1);
    CHECK(measure_ttft_seconds(img, "p", cfg, w) > 0);
    CHECK(measure_decode_tps(img, "p", cfg, w, 4) > 0);
    CHECK_THROWS_AS(measure_decode_tps(img, "p", cfg, w, 1), ContractError);
}

TEST_CASE("benchmark matrix covers every ratio with shared non-projector weights") {
    ModelConfig cfg = ovlm_test::tiny_config();
    Weights w = init_weights(cfg, 4);
    BenchOptions opts;
    opts.runs = 3;
    opts.warmup = 1;
    opts.decode_tokens = 4;
    auto reports = run_matrix(cfg, w, {1, 3, 9}, opts, 5);
    REQUIRE(reports.size() == 3);
    for (size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        CHECK(r.runs == 3);
        CHECK(r.warmup == 1);
        CHECK(r.invalid_runs == 0);
        CHECK(r.raw_ttft_ms.size() == 3);
        CHECK(r.raw_decode_tps.size() == 3);
        CHECK(r.ttft_ms.median > 0);
        CHECK(r.decode_tps.median > 0);
        CHECK(!r.host.empty());
    }
    CHECK(reports[0].image_tokens == 9);
    CHECK(reports[1].image_tokens == 3);
    CHECK(reports[2].image_tokens == 1);
}

TEST_CASE("report serializations") {
    BenchmarkReport r;
    r.config_id = "ratio9";
    r.ratio = 9;
    r.image_tokens = 81;
    r.runs = 2;
    r.ttft_ms = {10, 9, 11};
    r.decode_tps = {100, 90, 110};
    r.raw_ttft_ms = {9.5, 10.5};
    r.raw_decode_tps = {95, 105};
    r.host = "testhost";
    std::vector<BenchmarkReport> v = {r};

    auto j = nlohmann::json::parse(reports_to_json(v));
    REQUIRE(j.is_array());
    CHECK(j[0]["config_id"] == "ratio9");
    CHECK(j[0]["image_tokens"] == 81);
    CHECK(j[0]["ttft_ms"]["median"] == doctest::Approx(10));

    std::istringstream csv(reports_to_csv(v));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "config,metric,median,p10,p90,runs");
    int rows = 0;
    while (std::getline(csv, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 2);  // one ttft row + one decode row

    const std::string table = reports_to_table(v);
    CHECK(table.find("ratio9") != std::string::npos);
}
