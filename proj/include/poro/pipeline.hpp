#pragma once
// End-to-end assessment orchestration: registration, patch homogenization,
// reference metrics, 2D component comparison, 3D network comparison, and the
// cross-region statistics, emitted as deterministic CSV/JSON reports with a
// full parameter manifest. Stage results are cached on disk keyed by a
// content hash, so re-running with one changed input recomputes only the
// affected stages.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "components.hpp"
#include "core.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "iqa.hpp"
#include "mosaic.hpp"
#include "registration.hpp"
#include "segment.hpp"
#include "skeleton.hpp"
#include "stats.hpp"

namespace poro {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RegionInput {
    std::string id;
    fs::path gt_stack;
    fs::path gt_features;  // optional, enables Frechet/KID
};

struct GeneratedInput {
    std::string region;
    std::string model;
    std::string resolution;  // x2 | x4 | x8
    fs::path stack;
    fs::path features;  // optional
    bool cyclegan = false;
};

struct PipelineConfig {
    int schema_version = 1;
    fs::path output_dir = "poro_out";
    std::vector<RegionInput> regions;
    std::vector<GeneratedInput> inputs;

    bool registration_enabled = false;
    SearchWindow registration_window{16.0, 2.0};

    bool homogenize_cyclegan = true;
    int patch_size = 128;
    double patch_overlap = 0.25;

    VesselnessParams vessel{};          // scales 2:0.5:24, tau 0.5
    ThresholdMode threshold_mode = ThresholdMode::fixed;
    HysteresisThresholds fixed_thresholds{0.1, 0.3};
    double z_factor = 0.0;              // 0: derive from spacing

    int cc_min_area = 16;
    double cc_bin_width = 100.0;

    double tubule_min_diameter_um = 1.0;
    int prune_steps = 2;

    std::vector<std::string> metrics{"mse", "psnr", "ncc", "ssim",
                                     "msssim", "haarpsi", "wd"};
    std::uint64_t seed = 1;
    bool use_cache = true;
};

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["schema_version"] = c.schema_version;
    j["output_dir"] = c.output_dir.string();
    j["regions"] = nlohmann::json::array();
    for (const auto& r : c.regions)
        j["regions"].push_back({{"id", r.id},
                                {"gt", r.gt_stack.string()},
                                {"gt_features", r.gt_features.string()}});
    j["inputs"] = nlohmann::json::array();
    for (const auto& i : c.inputs)
        j["inputs"].push_back({{"region", i.region},
                               {"model", i.model},
                               {"resolution", i.resolution},
                               {"stack", i.stack.string()},
                               {"features", i.features.string()},
                               {"cyclegan", i.cyclegan}});
    j["registration"] = {{"enabled", c.registration_enabled},
                         {"max_shift_px", c.registration_window.max_shift_px},
                         {"max_rotation_deg", c.registration_window.max_rotation_deg}};
    j["homogenize"] = {{"cyclegan", c.homogenize_cyclegan},
                       {"patch_size", c.patch_size},
                       {"overlap", c.patch_overlap}};
    j["vesselness"] = {{"min_fwhm", c.vessel.scales.min_fwhm},
                       {"max_fwhm", c.vessel.scales.max_fwhm},
                       {"step", c.vessel.scales.step},
                       {"tau", c.vessel.tau},
                       {"bright_on_dark", c.vessel.bright_on_dark}};
    j["thresholds"] = {{"mode", c.threshold_mode == ThresholdMode::fixed      ? "fixed"
                                : c.threshold_mode == ThresholdMode::auto_otsu ? "auto"
                                                                               : "cyclegan"},
                       {"low", c.fixed_thresholds.low},
                       {"high", c.fixed_thresholds.high}};
    j["z_factor"] = c.z_factor;
    j["cc"] = {{"min_area", c.cc_min_area}, {"bin_width", c.cc_bin_width}};
    j["graph"] = {{"tubule_min_diameter_um", c.tubule_min_diameter_um},
                  {"prune_steps", c.prune_steps}};
    j["metrics"] = c.metrics;
    j["seed"] = c.seed;
    j["use_cache"] = c.use_cache;
    return j;
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1)
        throw std::runtime_error("config: unsupported schema_version " +
                                 std::to_string(c.schema_version));
    c.output_dir = j.at("output_dir").get<std::string>();
    for (const auto& r : j.at("regions")) {
        RegionInput ri;
        ri.id = r.at("id").get<std::string>();
        ri.gt_stack = r.at("gt").get<std::string>();
        if (r.contains("gt_features")) ri.gt_features = r.at("gt_features").get<std::string>();
        c.regions.push_back(std::move(ri));
    }
    for (const auto& i : j.at("inputs")) {
        GeneratedInput gi;
        gi.region = i.at("region").get<std::string>();
        gi.model = i.at("model").get<std::string>();
        gi.resolution = i.at("resolution").get<std::string>();
        gi.stack = i.at("stack").get<std::string>();
        if (i.contains("features")) gi.features = i.at("features").get<std::string>();
        if (i.contains("cyclegan")) gi.cyclegan = i.at("cyclegan").get<bool>();
        c.inputs.push_back(std::move(gi));
    }
    if (j.contains("registration")) {
        const auto& r = j.at("registration");
        c.registration_enabled = r.value("enabled", false);
        c.registration_window.max_shift_px = r.value("max_shift_px", 16.0);
        c.registration_window.max_rotation_deg = r.value("max_rotation_deg", 2.0);
    }
    if (j.contains("homogenize")) {
        const auto& h = j.at("homogenize");
        c.homogenize_cyclegan = h.value("cyclegan", true);
        c.patch_size = h.value("patch_size", 128);
        c.patch_overlap = h.value("overlap", 0.25);
    }
    if (j.contains("vesselness")) {
        const auto& v = j.at("vesselness");
        c.vessel.scales.min_fwhm = v.value("min_fwhm", 2.0);
        c.vessel.scales.max_fwhm = v.value("max_fwhm", 24.0);
        c.vessel.scales.step = v.value("step", 0.5);
        c.vessel.tau = v.value("tau", 0.5);
        c.vessel.bright_on_dark = v.value("bright_on_dark", true);
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        const std::string mode = t.value("mode", "fixed");
        c.threshold_mode = mode == "auto"       ? ThresholdMode::auto_otsu
                           : mode == "cyclegan" ? ThresholdMode::cyclegan
                                                : ThresholdMode::fixed;
        c.fixed_thresholds.low = t.value("low", 0.1);
        c.fixed_thresholds.high = t.value("high", 0.3);
    }
    c.z_factor = j.value("z_factor", 0.0);
    if (j.contains("cc")) {
        c.cc_min_area = j.at("cc").value("min_area", 16);
        c.cc_bin_width = j.at("cc").value("bin_width", 100.0);
    }
    if (j.contains("graph")) {
        c.tubule_min_diameter_um = j.at("graph").value("tubule_min_diameter_um", 1.0);
        c.prune_steps = j.at("graph").value("prune_steps", 2);
    }
    if (j.contains("metrics")) c.metrics = j.at("metrics").get<std::vector<std::string>>();
    c.seed = j.value("seed", std::uint64_t(1));
    c.use_cache = j.value("use_cache", true);
    return c;
}

// ---------------------------------------------------------------------------
// MetricRecord
// ---------------------------------------------------------------------------

struct MetricRecord {
    std::string region;
    std::string model;
    std::string resolution;
    std::string metric;
    MetricValue value;
    std::string aggregation = "per-image-mean";  // or "per-stack"
};

// ---------------------------------------------------------------------------
// Hashing and cache plumbing
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_string(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t hash_file(const fs::path& p, std::uint64_t h = 0xcbf29ce484222325ull) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return hash_string(p.string(), h);
    char buf[65536];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(buf, std::size_t(in.gcount()), h);
    }
    return h;
}

inline std::uint64_t hash_stack_files(const fs::path& p, std::uint64_t h) {
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) h = hash_file(f, h);
        return h;
    }
    fs::path base = p;
    if (base.extension() == ".json" || base.extension() == ".raw") base.replace_extension();
    fs::path jp = base, rp = base;
    jp += ".json";
    rp += ".raw";
    h = hash_file(jp, h);
    return hash_file(rp, h);
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// formats doubles identically across runs
inline std::string fmt_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
}

inline nlohmann::json records_to_json(const std::vector<MetricRecord>& recs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : recs) {
        nlohmann::json jr;
        jr["region"] = r.region;
        jr["model"] = r.model;
        jr["resolution"] = r.resolution;
        jr["metric"] = r.metric;
        switch (r.value.state) {
            case MetricValue::State::finite:
                jr["value"] = r.value.value;
                jr["flag"] = "ok";
                break;
            case MetricValue::State::infinite:
                jr["value"] = nullptr;
                jr["flag"] = "infinite";
                break;
            case MetricValue::State::undefined:
                jr["value"] = nullptr;
                jr["flag"] = "undefined";
                break;
        }
        jr["aggregation"] = r.aggregation;
        arr.push_back(std::move(jr));
    }
    return arr;
}

inline std::vector<MetricRecord> records_from_json(const nlohmann::json& arr) {
    std::vector<MetricRecord> recs;
    for (const auto& jr : arr) {
        MetricRecord r;
        r.region = jr.at("region").get<std::string>();
        r.model = jr.at("model").get<std::string>();
        r.resolution = jr.at("resolution").get<std::string>();
        r.metric = jr.at("metric").get<std::string>();
        const std::string flag = jr.at("flag").get<std::string>();
        if (flag == "ok")
            r.value = MetricValue::of(jr.at("value").get<double>());
        else if (flag == "infinite")
            r.value = MetricValue::infinite();
        else
            r.value = MetricValue::undefined();
        r.aggregation = jr.at("aggregation").get<std::string>();
        recs.push_back(std::move(r));
    }
    return recs;
}

struct StageCache {
    fs::path dir;
    bool enabled = true;

    [[nodiscard]] std::optional<std::vector<MetricRecord>> load(const std::string& key) const {
        if (!enabled) return std::nullopt;
        const fs::path f = dir / (key + ".json");
        if (!fs::exists(f)) return std::nullopt;
        std::ifstream in(f);
        nlohmann::json j;
        in >> j;
        return records_from_json(j);
    }
    void store(const std::string& key, const std::vector<MetricRecord>& recs) const {
        if (!enabled) return;
        fs::create_directories(dir);
        std::ofstream out(dir / (key + ".json"));
        out << records_to_json(recs).dump(1) << "\n";
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Report bundle
// ---------------------------------------------------------------------------

struct SignificanceEntry {
    std::string metric;
    std::string resolution;
    std::string model_a, model_b;
    std::string stars;
};

struct CiEntry {
    std::string metric;
    std::string model;
    std::string resolution;
    MeanCi ci;
};

struct ReportBundle {
    std::vector<MetricRecord> records;
    std::vector<SignificanceEntry> significance;
    std::vector<CiEntry> intervals;
    nlohmann::json manifest;
};

namespace detail {

inline void sort_records(std::vector<MetricRecord>& recs) {
    std::sort(recs.begin(), recs.end(), [](const MetricRecord& a, const MetricRecord& b) {
        return std::tie(a.region, a.model, a.resolution, a.metric, a.aggregation) <
               std::tie(b.region, b.model, b.resolution, b.metric, b.aggregation);
    });
}

}  // namespace detail

/// CSV schema: region,model,resolution,metric,value,ci_lo,ci_hi. Per-record
/// rows leave the interval columns empty; cross-region summary rows (region
/// "all") carry the t-interval. Output bytes are stable for identical inputs.
inline void emit_report(const ReportBundle& bundle, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    auto records = bundle.records;
    detail::sort_records(records);

    {
        std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
        csv << "region,model,resolution,metric,value,ci_lo,ci_hi\n";
        for (const auto& r : records) {
            csv << r.region << ',' << r.model << ',' << r.resolution << ',' << r.metric << ',';
            if (r.value.state == MetricValue::State::finite)
                csv << detail::fmt_value(r.value.value);
            else
                csv << (r.value.state == MetricValue::State::infinite ? "inf" : "undefined");
            csv << ",,\n";
        }
        for (const auto& ci : bundle.intervals) {
            csv << "all," << ci.model << ',' << ci.resolution << ',' << ci.metric << ','
                << detail::fmt_value(ci.ci.mean) << ',' << detail::fmt_value(ci.ci.lo) << ','
                << detail::fmt_value(ci.ci.hi) << "\n";
        }
    }
    {
        std::ofstream csv(out_dir / "significance.csv", std::ios::binary);
        csv << "metric,resolution,model_a,model_b,significance\n";
        for (const auto& s : bundle.significance)
            csv << s.metric << ',' << s.resolution << ',' << s.model_a << ',' << s.model_b << ','
                << s.stars << "\n";
    }
    {
        nlohmann::json j;
        j["records"] = detail::records_to_json(records);
        j["intervals"] = nlohmann::json::array();
        for (const auto& ci : bundle.intervals)
            j["intervals"].push_back({{"metric", ci.metric},
                                      {"model", ci.model},
                                      {"resolution", ci.resolution},
                                      {"mean", ci.ci.mean},
                                      {"lo", ci.ci.lo},
                                      {"hi", ci.ci.hi},
                                      {"sample_variance", ci.ci.sample_variance}});
        j["significance"] = nlohmann::json::array();
        for (const auto& s : bundle.significance)
            j["significance"].push_back({{"metric", s.metric},
                                         {"resolution", s.resolution},
                                         {"model_a", s.model_a},
                                         {"model_b", s.model_b},
                                         {"significance", s.stars}});
        std::ofstream out(out_dir / "report.json", std::ios::binary);
        out << j.dump(1) << "\n";
    }
    {
        std::ofstream out(out_dir / "manifest.json", std::ios::binary);
        out << bundle.manifest.dump(1) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

namespace detail {

struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error("stage:" + stage + ": " + what) {}
};

inline Image2D homogenized_slice(const Image2D& slice, int patch, double overlap) {
    auto [grid, patches] = extract_patches(slice, patch, overlap);
    const auto result = homogenize_background(patches);
    return stitch(grid, result.patches_as_images());
}

inline ImageStack prepare_generated(const ImageStack& gen, const ImageStack& gt,
                                    const PipelineConfig& cfg, bool cyclegan_flagged) {
    ImageStack out = gen;
    if (cfg.registration_enabled) {
        // one rigid transform per stack, estimated on the middle slice
        const int mid = gt.nz / 2;
        const RigidTransform2D t =
            register_rigid(out.slice(mid), gt.slice(mid), cfg.registration_window);
        if (!t.is_identity()) {
            for (int z = 0; z < out.nz; ++z)
                out.set_slice(z, apply_transform(out.slice(z), t).image);
        }
    }
    if (cfg.homogenize_cyclegan && cyclegan_flagged &&
        cfg.patch_size <= std::min(out.nx, out.ny)) {
        for (int z = 0; z < out.nz; ++z)
            out.set_slice(z, homogenized_slice(out.slice(z), cfg.patch_size, cfg.patch_overlap));
    }
    return out;
}

inline std::vector<MetricRecord> iqa_stage(const ImageStack& gen, const ImageStack& gt,
                                           const GeneratedInput& input,
                                           const PipelineConfig& cfg) {
    std::vector<MetricRecord> recs;
    const double range = gt.range_hi > gt.range_lo ? gt.range_hi - gt.range_lo : 1.0;
    const std::set<std::string> wanted(cfg.metrics.begin(), cfg.metrics.end());

    SsimParams sp;
    sp.data_range = range;
    auto run = [&](const std::string& name,
                   const std::function<MetricValue(const Image2D&, const Image2D&)>& fn) {
        if (!wanted.count(name)) return;
        MetricValue v;
        try {
            v = MetricValue::of(stack_score(fn, gen, gt).mean);
        } catch (const std::runtime_error&) {
            // every slice carried a flag (identical stacks under PSNR);
            // report the flag itself
            v = fn(gen.slice(0), gt.slice(0));
        }
        recs.push_back({input.region, input.model, input.resolution, name, v,
                        "per-image-mean"});
    };
    run("mse", [&](const Image2D& a, const Image2D& b) { return MetricValue::of(mse(a, b)); });
    run("psnr", [&](const Image2D& a, const Image2D& b) { return psnr(a, b, range); });
    run("ncc", [&](const Image2D& a, const Image2D& b) { return ncc(a, b); });
    run("ssim",
        [&](const Image2D& a, const Image2D& b) { return MetricValue::of(ssim(a, b, sp)); });
    if (std::min(gt.nx, gt.ny) >= sp.window * 16)
        run("msssim", [&](const Image2D& a, const Image2D& b) {
            return MetricValue::of(ms_ssim(a, b, sp));
        });
    HaarPsiParams hp;
    hp.data_range = range;
    run("haarpsi", [&](const Image2D& a, const Image2D& b) {
        return MetricValue::of(haarpsi(a, b, hp));
    });
    run("wd", [&](const Image2D& a, const Image2D& b) {
        return MetricValue::of(wd_intensity(a, b, range));
    });
    return recs;
}

inline std::vector<MetricRecord> feature_stage(const GeneratedInput& input,
                                               const fs::path& gt_features) {
    std::vector<MetricRecord> recs;
    if (input.features.empty() || gt_features.empty()) return recs;
    const FeatureMatrix fa = load_features(input.features);
    const FeatureMatrix fb = load_features(gt_features);
    recs.push_back({input.region, input.model, input.resolution, "frechet",
                    MetricValue::of(frechet_distance(fa, fb, true)), "per-stack"});
    recs.push_back({input.region, input.model, input.resolution, "kid",
                    MetricValue::of(kid(fa, fb)), "per-stack"});
    return recs;
}

inline BinarizeParams binarize_params(const PipelineConfig& cfg, bool cyclegan_flagged,
                                      int dimensionality) {
    BinarizeParams bp;
    bp.vessel = cfg.vessel;
    bp.dimensionality = dimensionality;
    bp.mode = cyclegan_flagged ? ThresholdMode::cyclegan : cfg.threshold_mode;
    bp.fixed_thresholds = cfg.fixed_thresholds;
    bp.z_factor = cfg.z_factor;
    return bp;
}

inline std::vector<MetricRecord> cc_stage(const BinaryVolume& gen_mask,
                                          const BinaryVolume& gt_mask,
                                          const GeneratedInput& input,
                                          const PipelineConfig& cfg) {
    std::vector<MetricRecord> recs;
    auto add = [&](const std::string& name, double v) {
        recs.push_back(
            {input.region, input.model, input.resolution, name, MetricValue::of(v), "per-stack"});
    };

    // detailed taxonomy on the representative middle image of the stack
    const int mid = gt_mask.nz / 2;
    const LabelMap gen_lm = filter_small(label_components(gen_mask.slice(mid)), cfg.cc_min_area);
    const LabelMap gt_lm = filter_small(label_components(gt_mask.slice(mid)), cfg.cc_min_area);
    const CcTaxonomy tax = classify_components(gen_lm, gt_lm);
    add("cc_matching_pct", tax.matching_pct());
    add("cc_missing_pct", tax.missing_pct());
    add("cc_false_positives", tax.false_positives);
    add("cc_merged", tax.merged);
    add("cc_split", tax.split);

    // area histograms over every slice of the stack
    AreaHistogram gen_h, gt_h;
    gen_h.bin_width = gt_h.bin_width = cfg.cc_bin_width;
    auto accumulate = [&](const BinaryVolume& m, AreaHistogram& h) {
        for (int z = 0; z < m.nz; ++z) {
            const auto lm = filter_small(label_components(m.slice(z)), cfg.cc_min_area);
            const auto hz = area_histogram(lm, cfg.cc_bin_width);
            if (h.counts.size() < hz.counts.size()) h.counts.resize(hz.counts.size(), 0.0);
            for (std::size_t i = 0; i < hz.counts.size(); ++i) h.counts[i] += hz.counts[i];
        }
    };
    accumulate(gen_mask, gen_h);
    accumulate(gt_mask, gt_h);
    double m1 = 0.0, m2 = 0.0;
    for (double v : gen_h.counts) m1 += v;
    for (double v : gt_h.counts) m2 += v;
    if (m1 > 0.0 && m2 > 0.0)
        add("cc_wd_area", wasserstein_1d(gen_h, gt_h));
    else
        recs.push_back({input.region, input.model, input.resolution, "cc_wd_area",
                        MetricValue::undefined(), "per-stack"});
    return recs;
}

inline GraphMetrics graph_pipeline(const ImageStack& stack, const PipelineConfig& cfg,
                                   bool cyclegan_flagged) {
    const auto bin = binarize_pipeline(stack, binarize_params(cfg, cyclegan_flagged, 3));
    const auto skel = skeletonize3d(bin.mask);
    const auto thick = local_thickness(bin.mask);
    auto g = extract_graph(skel, thick);
    g = prune_spurs(g, cfg.prune_steps);
    g = classify_edges(g, {cfg.tubule_min_diameter_um, std::nullopt, 45.0});
    return graph_metrics(g);
}

inline std::vector<MetricRecord> graph_stage(const GraphMetrics& gen, const GraphMetrics& gt,
                                             const GeneratedInput& input) {
    std::vector<MetricRecord> recs;
    for (const auto& [name, ratio] : metric_ratios(gen, gt)) {
        recs.push_back({input.region, input.model, input.resolution, "graph_ratio_" + name,
                        ratio ? MetricValue::of(*ratio) : MetricValue::undefined(), "per-stack"});
    }
    return recs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// run_pipeline
// ---------------------------------------------------------------------------

inline ReportBundle run_pipeline(const PipelineConfig& cfg) {
    ReportBundle bundle;
    nlohmann::json& manifest = bundle.manifest;
    manifest["version"] = version_string;
    manifest["config"] = pipeline_config_to_json(cfg);
    manifest["status"] = "RUNNING";

    fs::create_directories(cfg.output_dir);
    auto write_manifest = [&] {
        std::ofstream out(cfg.output_dir / "manifest.json", std::ios::binary);
        out << manifest.dump(1) << "\n";
    };
    write_manifest();

    try {
        // validation happens before any compute
        std::map<std::string, const RegionInput*> regions;
        for (const auto& r : cfg.regions) {
            const auto [jp, rp] = detail::stack_pair(r.gt_stack);
            if (!fs::exists(r.gt_stack) && !fs::exists(jp))
                throw detail::StageError("validate", "missing GT stack: " + r.gt_stack.string());
            regions[r.id] = &r;
        }
        if (cfg.inputs.empty()) throw detail::StageError("validate", "no generated inputs");
        for (const auto& i : cfg.inputs) {
            if (!regions.count(i.region))
                throw detail::StageError("validate",
                                         "input references unknown region " + i.region);
            const auto [jp, rp] = detail::stack_pair(i.stack);
            if (!fs::exists(i.stack) && !fs::exists(jp))
                throw detail::StageError("validate", "missing stack: " + i.stack.string());
        }

        const detail::StageCache cache{cfg.output_dir / "cache", cfg.use_cache};
        const std::string cfg_hash =
            detail::hex64(detail::hash_string(pipeline_config_to_json(cfg).dump()));

        // per-region GT state, computed once and shared
        struct GtState {
            ImageStack stack;
            BinaryVolume mask2d;
            GraphMetrics graph;
            bool ready = false;
        };
        std::map<std::string, GtState> gt_states;

        for (const auto& input : cfg.inputs) {
            const RegionInput& region = *regions.at(input.region);
            const std::string input_hash = detail::hex64(detail::hash_stack_files(
                input.stack,
                detail::hash_stack_files(
                    region.gt_stack, detail::hash_string(cfg_hash + input.model +
                                                         input.resolution + input.region))));

            if (auto cached = cache.load("all_" + input_hash)) {
                bundle.records.insert(bundle.records.end(), cached->begin(), cached->end());
                continue;
            }

            GtState& gt = gt_states[input.region];
            if (!gt.ready) {
                gt.stack = load_stack(region.gt_stack);
                gt.mask2d =
                    binarize_pipeline(gt.stack, detail::binarize_params(cfg, false, 2)).mask;
                gt.graph = detail::graph_pipeline(gt.stack, cfg, false);
                gt.ready = true;
            }

            ImageStack gen = load_stack(input.stack);
            if (!gen.same_dims(gt.stack))
                throw detail::StageError("validate", "dims mismatch for " + input.stack.string());
            gen = detail::prepare_generated(gen, gt.stack, cfg, input.cyclegan);

            std::vector<MetricRecord> recs;
            try {
                auto iqa = detail::iqa_stage(gen, gt.stack, input, cfg);
                recs.insert(recs.end(), iqa.begin(), iqa.end());
                auto feats = detail::feature_stage(input, region.gt_features);
                recs.insert(recs.end(), feats.begin(), feats.end());
            } catch (const detail::StageError&) {
                throw;
            } catch (const std::exception& e) {
                throw detail::StageError("iqa", e.what());
            }
            try {
                const auto gen_mask =
                    binarize_pipeline(gen, detail::binarize_params(cfg, input.cyclegan, 2)).mask;
                auto cc = detail::cc_stage(gen_mask, gt.mask2d, input, cfg);
                recs.insert(recs.end(), cc.begin(), cc.end());
            } catch (const std::exception& e) {
                throw detail::StageError("cc", e.what());
            }
            try {
                const auto gen_graph = detail::graph_pipeline(gen, cfg, input.cyclegan);
                auto gr = detail::graph_stage(gen_graph, gt.graph, input);
                recs.insert(recs.end(), gr.begin(), gr.end());
            } catch (const std::exception& e) {
                throw detail::StageError("graph", e.what());
            }

            cache.store("all_" + input_hash, recs);
            bundle.records.insert(bundle.records.end(), recs.begin(), recs.end());
        }

        // cross-region statistics per (metric, resolution)
        try {
            std::set<std::string> metrics_seen, models, regions_seen, resolutions;
            for (const auto& r : bundle.records) {
                metrics_seen.insert(r.metric);
                models.insert(r.model);
                regions_seen.insert(r.region);
                resolutions.insert(r.resolution);
            }
            auto find_value = [&](const std::string& reg, const std::string& model,
                                  const std::string& res,
                                  const std::string& metric) -> std::optional<double> {
                for (const auto& r : bundle.records)
                    if (r.region == reg && r.model == model && r.resolution == res &&
                        r.metric == metric && r.value.state == MetricValue::State::finite)
                        return r.value.value;
                return std::nullopt;
            };

            for (const auto& metric : metrics_seen)
                for (const auto& res : resolutions) {
                    for (const auto& model : models) {
                        std::vector<double> vals;
                        for (const auto& reg : regions_seen)
                            if (auto v = find_value(reg, model, res, metric)) vals.push_back(*v);
                        if (vals.size() >= 2)
                            bundle.intervals.push_back({metric, model, res, mean_ci(vals)});
                    }
                    // Friedman + Nemenyi need complete blocks
                    std::vector<std::string> model_list(models.begin(), models.end());
                    std::vector<std::string> region_list;
                    for (const auto& reg : regions_seen) {
                        bool complete = true;
                        for (const auto& model : model_list)
                            if (!find_value(reg, model, res, metric)) complete = false;
                        if (complete) region_list.push_back(reg);
                    }
                    if (model_list.size() >= 2 && region_list.size() >= 2 &&
                        model_list.size() <= 10) {
                        ScoreMatrix m(int(region_list.size()), int(model_list.size()));
                        for (std::size_t b = 0; b < region_list.size(); ++b)
                            for (std::size_t j = 0; j < model_list.size(); ++j)
                                m.at(int(b), int(j)) =
                                    *find_value(region_list[b], model_list[j], res, metric);
                        const auto nem = nemenyi(m);
                        for (std::size_t i = 0; i < model_list.size(); ++i)
                            for (std::size_t j = i + 1; j < model_list.size(); ++j)
                                bundle.significance.push_back(
                                    {metric, res, model_list[i], model_list[j],
                                     stars_label(nem.at(int(i), int(j)))});
                    }
                }
        } catch (const std::exception& e) {
            throw detail::StageError("stats", e.what());
        }

        manifest["status"] = "OK";
        manifest["n_records"] = bundle.records.size();
        emit_report(bundle, cfg.output_dir);  // also rewrites the manifest
        return bundle;
    } catch (...) {
        manifest["status"] = "FAILED";
        write_manifest();
        throw;
    }
}

}  // namespace poro
