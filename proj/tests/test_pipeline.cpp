#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <poro/phantom.hpp>
#include <poro/pipeline.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace poro;

namespace {

fs::path temp_dir(const char* suffix) {
    auto p = fs::temp_directory_path() / (std::string("poro_pipe_") + suffix);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// small isotropic phantom cheap enough for pipeline tests
ImageStack make_phantom_stack(std::uint64_t seed) {
    PhantomParams p;
    p.nx = 64;
    p.ny = 64;
    p.nz = 16;
    p.sx = p.sy = p.sz = 100.0;
    p.n_tubules = 2;
    p.n_branches = 1;
    p.tubule_radius_um_min = 0.55;
    p.tubule_radius_um_max = 0.7;
    p.jitter_px = 1.0;
    p.min_junction_separation_px = 20.0;
    p.end_margin_px = 16.0;
    return render(generate_network(p, seed));
}

PipelineConfig fast_config(const fs::path& dir) {
    PipelineConfig cfg;
    cfg.output_dir = dir / "out";
    cfg.vessel.scales = {2.0, 8.0, 1.0};
    cfg.prune_steps = 8;
    cfg.metrics = {"mse", "psnr", "ncc", "ssim", "wd"};
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config JSON round trip") {
    PipelineConfig cfg;
    cfg.regions.push_back({"r1", "gt_path", ""});
    cfg.inputs.push_back({"r1", "m1", "x4", "gen_path", "", true});
    cfg.registration_enabled = true;
    cfg.threshold_mode = ThresholdMode::auto_otsu;
    cfg.prune_steps = 5;
    const auto j = pipeline_config_to_json(cfg);
    const auto back = pipeline_config_from_json(j);
    CHECK(back.regions.size() == 1);
    CHECK(back.inputs.size() == 1);
    CHECK(back.inputs[0].cyclegan);
    CHECK(back.registration_enabled);
    CHECK(back.threshold_mode == ThresholdMode::auto_otsu);
    CHECK(back.prune_steps == 5);
    CHECK(back.vessel.scales.max_fwhm == 24.0);

    auto bad = j;
    bad["schema_version"] = 99;
    CHECK_THROWS(pipeline_config_from_json(bad));
}

TEST_CASE("missing stack fails in validation before any compute") {
    auto dir = temp_dir("missing");
    PipelineConfig cfg = fast_config(dir);
    cfg.regions.push_back({"r1", dir / "nonexistent", ""});
    cfg.inputs.push_back({"r1", "m1", "x2", dir / "also_missing", "", false});
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage:validate"),
                         std::runtime_error);
    // the FAILED marker is retained in the manifest
    nlohmann::json manifest;
    std::ifstream in(cfg.output_dir / "manifest.json");
    in >> manifest;
    CHECK(manifest.at("status") == "FAILED");
    fs::remove_all(dir);
}

TEST_CASE("self-comparison: identities, full matching, unit ratios, no significance") {
    auto dir = temp_dir("self");
    const auto stack = make_phantom_stack(3);
    save_stack(stack, dir / "gt", Dtype::f32);

    PipelineConfig cfg = fast_config(dir);
    cfg.regions.push_back({"r1", dir / "gt", ""});
    cfg.inputs.push_back({"r1", "self", "x2", dir / "gt", "", false});
    const auto bundle = run_pipeline(cfg);

    std::map<std::string, MetricValue> by_metric;
    for (const auto& r : bundle.records) by_metric[r.metric] = r.value;
    CHECK(by_metric.at("mse").value == doctest::Approx(0.0));
    CHECK(by_metric.at("psnr").state == MetricValue::State::infinite);
    CHECK(by_metric.at("ncc").value == doctest::Approx(1.0));
    CHECK(by_metric.at("ssim").value == doctest::Approx(1.0));
    CHECK(by_metric.at("wd").value == doctest::Approx(0.0));
    CHECK(by_metric.at("cc_matching_pct").value == doctest::Approx(100.0));
    CHECK(by_metric.at("cc_missing_pct").value == doctest::Approx(0.0));
    CHECK(by_metric.at("cc_false_positives").value == doctest::Approx(0.0));
    CHECK(by_metric.at("cc_wd_area").value == doctest::Approx(0.0));
    int finite_ratios = 0;
    for (const auto& r : bundle.records)
        if (r.metric.rfind("graph_ratio_", 0) == 0 &&
            r.value.state == MetricValue::State::finite) {
            CHECK(r.value.value == doctest::Approx(1.0));
            ++finite_ratios;
        }
    CHECK(finite_ratios >= 4);  // the phantom network yields a real graph
    // a single model yields no pairwise significance rows
    CHECK(bundle.significance.empty());
    fs::remove_all(dir);
}

TEST_CASE("determinism: two runs produce byte-identical reports") {
    auto dir = temp_dir("determinism");
    const auto gt = make_phantom_stack(5);
    save_stack(gt, dir / "gt", Dtype::f32);
    const auto deg = degrade(gt, 4);
    save_stack(deg, dir / "deg", Dtype::f32);

    PipelineConfig cfg = fast_config(dir);
    cfg.regions.push_back({"r1", dir / "gt", ""});
    cfg.inputs.push_back({"r1", "deg4", "x4", dir / "deg", "", false});
    cfg.output_dir = dir / "out1";
    cfg.use_cache = false;
    run_pipeline(cfg);
    cfg.output_dir = dir / "out2";
    run_pipeline(cfg);

    CHECK(slurp(dir / "out1" / "metrics.csv") == slurp(dir / "out2" / "metrics.csv"));
    CHECK(slurp(dir / "out1" / "report.json") == slurp(dir / "out2" / "report.json"));
    CHECK(slurp(dir / "out1" / "significance.csv") == slurp(dir / "out2" / "significance.csv"));
    fs::remove_all(dir);
}

TEST_CASE("cache reuse produces the same records") {
    auto dir = temp_dir("cache");
    const auto gt = make_phantom_stack(6);
    save_stack(gt, dir / "gt", Dtype::f32);
    const auto deg = degrade(gt, 2);
    save_stack(deg, dir / "deg", Dtype::f32);

    PipelineConfig cfg = fast_config(dir);
    cfg.regions.push_back({"r1", dir / "gt", ""});
    cfg.inputs.push_back({"r1", "deg2", "x2", dir / "deg", "", false});
    const auto first = run_pipeline(cfg);
    CHECK(fs::exists(cfg.output_dir / "cache"));
    const auto second = run_pipeline(cfg);  // hits the cache
    REQUIRE(first.records.size() == second.records.size());
    for (std::size_t i = 0; i < first.records.size(); ++i) {
        CHECK(first.records[i].metric == second.records[i].metric);
        if (first.records[i].value.state == MetricValue::State::finite)
            CHECK(first.records[i].value.value ==
                  doctest::Approx(second.records[i].value.value));
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest carries every config parameter") {
    auto dir = temp_dir("manifest");
    const auto gt = make_phantom_stack(7);
    save_stack(gt, dir / "gt", Dtype::f32);
    PipelineConfig cfg = fast_config(dir);
    cfg.regions.push_back({"r1", dir / "gt", ""});
    cfg.inputs.push_back({"r1", "self", "x2", dir / "gt", "", false});
    run_pipeline(cfg);

    nlohmann::json manifest;
    std::ifstream in(cfg.output_dir / "manifest.json");
    in >> manifest;
    CHECK(manifest.at("status") == "OK");
    CHECK(manifest.at("version") == version_string);
    // the manifest's config must mirror the schema exactly
    const auto expect = pipeline_config_to_json(cfg);
    for (auto it = expect.begin(); it != expect.end(); ++it)
        CHECK(manifest.at("config").contains(it.key()));
    for (auto it = manifest.at("config").begin(); it != manifest.at("config").end(); ++it)
        CHECK(expect.contains(it.key()));
    fs::remove_all(dir);
}

TEST_CASE("two models x two regions: records, intervals and significance") {
    auto dir = temp_dir("cardinality");
    for (int r = 0; r < 2; ++r) {
        const auto gt = make_phantom_stack(10 + std::uint64_t(r));
        save_stack(gt, dir / ("gt" + std::to_string(r)), Dtype::f32);
        save_stack(degrade(gt, 2), dir / ("a" + std::to_string(r)), Dtype::f32);
        save_stack(degrade(gt, 4), dir / ("b" + std::to_string(r)), Dtype::f32);
    }
    PipelineConfig cfg = fast_config(dir);
    cfg.metrics = {"mse", "ssim"};
    for (int r = 0; r < 2; ++r) {
        const std::string id = "r" + std::to_string(r);
        cfg.regions.push_back({id, dir / ("gt" + std::to_string(r)), ""});
        cfg.inputs.push_back({id, "modelA", "x2", dir / ("a" + std::to_string(r)), "", false});
        cfg.inputs.push_back({id, "modelB", "x2", dir / ("b" + std::to_string(r)), "", false});
    }
    const auto bundle = run_pipeline(cfg);

    // 2 regions x 2 models, each with 2 iqa + 6 cc + 10 graph records
    int iqa_rows = 0;
    for (const auto& r : bundle.records)
        if (r.metric == "mse" || r.metric == "ssim") ++iqa_rows;
    CHECK(iqa_rows == 8);
    // significance rows exist for the modelA/modelB pair
    CHECK(!bundle.significance.empty());
    for (const auto& s : bundle.significance) {
        CHECK(s.model_a == "modelA");
        CHECK(s.model_b == "modelB");
    }
    // intervals across the two regions for each model
    CHECK(!bundle.intervals.empty());
    fs::remove_all(dir);
}

}  // TEST_SUITE
