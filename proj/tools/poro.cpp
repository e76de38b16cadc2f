// poro — quantitative assessment of tubular porosity networks in volumetric
// microscopy. Subcommands mirror the pipeline stages; `poro pipeline` runs
// the whole assessment from a JSON config.

#include <CLI11.hpp>
#include <json.hpp>

#include <poro/poro.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace poro;

namespace {

ScaleRange parse_scales(const std::string& spec) {
    // MIN:STEP:MAX
    ScaleRange r;
    double a = 0, b = 0, c = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ss(spec);
    if (!(ss >> a >> c1 >> b >> c2 >> c) || c1 != ':' || c2 != ':')
        throw CLI::ValidationError("--scales expects MIN:STEP:MAX");
    r.min_fwhm = a;
    r.step = b;
    r.max_fwhm = c;
    return r;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(1) << "\n";
}

nlohmann::json graph_to_json(const PorosityGraph& g) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes)
        j["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}, {"z", n.z},
                              {"degree", n.degree}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges) {
        nlohmann::json je;
        je["id"] = e.id;
        je["n0"] = e.n0;
        je["n1"] = e.n1;
        je["length_um"] = e.length_um;
        je["mean_diameter_um"] = e.mean_diameter_um;
        je["max_diameter_um"] = e.max_diameter_um;
        je["class"] = edge_class_name(e.cls);
        je["self_loop"] = e.self_loop;
        je["polyline"] = nlohmann::json::array();
        for (const auto& p : e.polyline) je["polyline"].push_back({p[0], p[1], p[2]});
        j["edges"].push_back(std::move(je));
    }
    return j;
}

void save_mask(const BinaryVolume& m, const std::string& path) {
    ImageStack s(m.nx, m.ny, m.nz);
    s.sx = m.sx; s.sy = m.sy; s.sz = m.sz;
    for (std::size_t i = 0; i < m.bits.size(); ++i) s.voxels[i] = m.bits[i] ? 255.0f : 0.0f;
    s.range_hi = 255.0;
    save_stack(s, path, Dtype::u8);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poro — biology-driven assessment of tubular porosity stacks"};
    app.require_subcommand(1);

    // ---- register ----------------------------------------------------------
    auto* reg = app.add_subcommand("register", "rigid X-Y alignment by mutual information");
    std::string reg_moving, reg_fixed, reg_out = "transform.json";
    double reg_shift = 16.0, reg_rot = 2.0;
    int reg_bins = 64, reg_slice = -1;
    reg->add_option("--moving", reg_moving, "stack to align")->required();
    reg->add_option("--fixed", reg_fixed, "reference stack")->required();
    reg->add_option("--max-shift", reg_shift, "translation window, px");
    reg->add_option("--max-rotation", reg_rot, "rotation window, degrees");
    reg->add_option("--bins", reg_bins, "histogram bins");
    reg->add_option("--slice", reg_slice, "slice index (default: middle)");
    reg->add_option("--out", reg_out, "output transform JSON");
    reg->callback([&] {
        const auto moving = load_stack(reg_moving);
        const auto fixed = load_stack(reg_fixed);
        const int z = reg_slice >= 0 ? reg_slice : fixed.nz / 2;
        const auto t = register_rigid(moving.slice(z), fixed.slice(z),
                                      {reg_shift, reg_rot}, reg_bins);
        write_json({{"theta", t.theta_deg}, {"tx", t.tx}, {"ty", t.ty}}, reg_out);
        std::cout << "theta " << t.theta_deg << " tx " << t.tx << " ty " << t.ty << "\n";
    });

    // ---- stitch -------------------------------------------------------------
    auto* st = app.add_subcommand("stitch", "patch decomposition + overlap-averaged restitch");
    std::string st_in, st_out = "stitched";
    int st_patch = 128;
    double st_overlap = 0.25;
    st->add_option("--in", st_in, "input stack")->required();
    st->add_option("--out", st_out, "output stack base path");
    st->add_option("--patch", st_patch, "patch size, px");
    st->add_option("--overlap", st_overlap, "overlap fraction (0, 0.25, 0.5)");
    st->callback([&] {
        auto s = load_stack(st_in);
        for (int z = 0; z < s.nz; ++z) {
            auto [grid, patches] = extract_patches(s.slice(z), st_patch, st_overlap);
            s.set_slice(z, stitch(grid, patches));
        }
        save_stack(s, st_out, Dtype::f32);
    });

    // ---- homogenize ----------------------------------------------------------
    auto* hom = app.add_subcommand("homogenize",
                                   "level per-patch background to the darkest patch");
    std::string hom_in, hom_out = "homogenized", hom_log = "offsets.json";
    int hom_patch = 128;
    double hom_overlap = 0.25;
    bool hom_min_ref = false;
    hom->add_option("--in", hom_in, "input stack")->required();
    hom->add_option("--out", hom_out, "output stack base path");
    hom->add_option("--patch", hom_patch, "patch size, px");
    hom->add_option("--overlap", hom_overlap, "overlap fraction");
    hom->add_option("--log", hom_log, "per-patch offset log (JSON)");
    hom->add_flag("--min-ref", hom_min_ref, "subtract patch minimum instead of background mean");
    hom->callback([&] {
        auto s = load_stack(hom_in);
        nlohmann::json log = nlohmann::json::array();
        for (int z = 0; z < s.nz; ++z) {
            auto [grid, patches] = extract_patches(s.slice(z), hom_patch, hom_overlap);
            const auto r = homogenize_background(
                patches, 0.10,
                hom_min_ref ? BackgroundRef::patch_min : BackgroundRef::darkest_mean);
            nlohmann::json jz;
            jz["slice"] = z;
            jz["baseline"] = r.baseline;
            jz["offsets"] = r.offsets;
            log.push_back(std::move(jz));
            s.set_slice(z, stitch(grid, r.patches_as_images()));
        }
        save_stack(s, hom_out, Dtype::f32);
        write_json(log, hom_log);
    });

    // ---- vesselness -----------------------------------------------------------
    auto* ves = app.add_subcommand("vesselness", "multiscale tubular enhancement");
    std::string ves_in, ves_out = "vesselness", ves_scales = "2:0.5:24";
    double ves_tau = 0.5;
    int ves_dim = 3;
    bool ves_dark = false;
    ves->add_option("--in", ves_in, "input stack")->required();
    ves->add_option("--out", ves_out, "output response stack base path");
    ves->add_option("--scales", ves_scales, "FWHM range MIN:STEP:MAX, px");
    ves->add_option("--tau", ves_tau, "sensitivity in (0,1]");
    ves->add_option("--dim", ves_dim, "2 = per slice, 3 = volumetric")
        ->check(CLI::IsMember({2, 3}));
    ves->add_flag("--dark-on-bright", ves_dark, "enhance dark structures instead");
    ves->callback([&] {
        const auto s = load_stack(ves_in);
        VesselnessParams p;
        p.scales = parse_scales(ves_scales);
        p.tau = ves_tau;
        p.bright_on_dark = !ves_dark;
        if (ves_dim == 3) {
            save_stack(jerman_vesselness(s, p), ves_out, Dtype::f32);
        } else {
            ImageStack out(s.nx, s.ny, s.nz);
            out.sx = s.sx; out.sy = s.sy; out.sz = s.sz;
            out.range_hi = 1.0;
            for (int z = 0; z < s.nz; ++z) out.set_slice(z, jerman_vesselness(s.slice(z), p));
            save_stack(out, ves_out, Dtype::f32);
        }
    });

    // ---- binarize -----------------------------------------------------------
    auto* bin = app.add_subcommand("binarize", "vesselness + hysteresis segmentation");
    std::string bin_in, bin_out = "mask", bin_scales = "2:0.5:24";
    double bin_low = 0.1, bin_high = 0.3, bin_tau = 0.5, bin_zfac = 0.0;
    int bin_dim = 3;
    bool bin_auto = false, bin_cyclegan = false;
    bin->add_option("--in", bin_in, "input stack")->required();
    bin->add_option("--out", bin_out, "output mask base path (u8)");
    bin->add_option("--scales", bin_scales, "FWHM range MIN:STEP:MAX, px");
    bin->add_option("--tau", bin_tau, "sensitivity");
    bin->add_option("--low", bin_low, "low hysteresis threshold");
    bin->add_option("--high", bin_high, "high hysteresis threshold");
    bin->add_option("--dim", bin_dim, "2 or 3")->check(CLI::IsMember({2, 3}));
    bin->add_option("--z-factor", bin_zfac, "Z resampling factor (0: derive from spacing)");
    bin->add_flag("--auto", bin_auto, "thresholds from multi-Otsu / 2");
    bin->add_flag("--cyclegan", bin_cyclegan, "use the 0.3/0.5 thresholds");
    bin->callback([&] {
        const auto s = load_stack(bin_in);
        BinarizeParams p;
        p.vessel.scales = parse_scales(bin_scales);
        p.vessel.tau = bin_tau;
        p.dimensionality = bin_dim;
        p.z_factor = bin_zfac;
        p.mode = bin_cyclegan ? ThresholdMode::cyclegan
                 : bin_auto   ? ThresholdMode::auto_otsu
                              : ThresholdMode::fixed;
        p.fixed_thresholds = {bin_low, bin_high};
        const auto r = binarize_pipeline(s, p);
        save_mask(r.mask, bin_out);
        std::cout << "thresholds " << r.low << " " << r.high << ", foreground voxels "
                  << r.mask.count() << "\n";
    });

    // ---- cc-compare -----------------------------------------------------------
    auto* cc = app.add_subcommand("cc-compare", "2D connected-component taxonomy vs GT");
    std::string cc_gen, cc_gt, cc_out = "cc.csv";
    std::string cc_region = "r1", cc_model = "model", cc_res = "x2";
    int cc_min_area = 16, cc_slice = -1;
    double cc_bin = 100.0;
    std::string cc_scales = "2:0.5:24";
    cc->add_option("--gen", cc_gen, "generated stack")->required();
    cc->add_option("--gt", cc_gt, "ground-truth stack")->required();
    cc->add_option("--min-area", cc_min_area, "reject components below this area, px^2");
    cc->add_option("--bin", cc_bin, "area histogram bin width");
    cc->add_option("--slice", cc_slice, "taxonomy slice (default: middle)");
    cc->add_option("--scales", cc_scales, "vesselness scales for binarization");
    cc->add_option("--region", cc_region, "region tag for the CSV");
    cc->add_option("--model", cc_model, "model tag for the CSV");
    cc->add_option("--resolution", cc_res, "resolution tag for the CSV");
    cc->add_option("--out", cc_out, "output CSV");
    cc->callback([&] {
        const auto gen = load_stack(cc_gen);
        const auto gt = load_stack(cc_gt);
        BinarizeParams p;
        p.vessel.scales = parse_scales(cc_scales);
        p.dimensionality = 2;
        const auto gen_mask = binarize_pipeline(gen, p).mask;
        const auto gt_mask = binarize_pipeline(gt, p).mask;
        const int z = cc_slice >= 0 ? cc_slice : gt.nz / 2;
        const auto gen_lm = filter_small(label_components(gen_mask.slice(z)), cc_min_area);
        const auto gt_lm = filter_small(label_components(gt_mask.slice(z)), cc_min_area);
        const auto tax = classify_components(gen_lm, gt_lm);
        const auto wd = wasserstein_1d(area_histogram(gen_lm, cc_bin),
                                       area_histogram(gt_lm, cc_bin));
        std::ofstream out(cc_out, std::ios::binary);
        out << "region,model,resolution,matching_pct,missing_pct,false_positives,merged,split,"
               "wd_area\n";
        out << cc_region << ',' << cc_model << ',' << cc_res << ',' << tax.matching_pct() << ','
            << tax.missing_pct() << ',' << tax.false_positives << ',' << tax.merged << ','
            << tax.split << ',' << wd << "\n";
        std::cout << "matching " << tax.matching_pct() << "% missing " << tax.missing_pct()
                  << "% fp " << tax.false_positives << "\n";
    });

    // ---- graph -----------------------------------------------------------------
    auto* gr = app.add_subcommand("graph", "3D network extraction and metrics");
    std::string gr_in, gr_out = "graph.json", gr_csv = "graph_metrics.csv", gr_scales = "2:0.5:24";
    double gr_tubule_diam = 1.0, gr_zfac = 0.0;
    int gr_prune = 2;
    bool gr_premask = false;
    gr->add_option("--in", gr_in, "input stack")->required();
    gr->add_option("--out", gr_out, "graph JSON (nodes, edges, polylines)");
    gr->add_option("--csv", gr_csv, "metrics CSV");
    gr->add_option("--scales", gr_scales, "vesselness scales");
    gr->add_option("--tubule-diameter", gr_tubule_diam, "tubule class floor, um");
    gr->add_option("--prune", gr_prune, "spur prune length, voxel steps");
    gr->add_option("--z-factor", gr_zfac, "Z resampling factor (0: derive)");
    gr->add_flag("--mask", gr_premask, "input is already a binary mask (u8)");
    gr->callback([&] {
        const auto s = load_stack(gr_in);
        BinaryVolume mask;
        if (gr_premask) {
            mask = BinaryVolume::like(s);
            for (std::size_t i = 0; i < s.size(); ++i) mask.bits[i] = s.voxels[i] > 0.0f;
        } else {
            BinarizeParams p;
            p.vessel.scales = parse_scales(gr_scales);
            p.z_factor = gr_zfac;
            mask = binarize_pipeline(s, p).mask;
        }
        const auto skel = skeletonize3d(mask);
        const auto thick = local_thickness(mask);
        auto g = extract_graph(skel, thick);
        g = prune_spurs(g, gr_prune);
        g = classify_edges(g, {gr_tubule_diam, std::nullopt, 45.0});
        write_json(graph_to_json(g), gr_out);
        const auto m = graph_metrics(g);
        std::ofstream out(gr_csv, std::ios::binary);
        out << "n_edges_all,n_edges_tubule,n_edges_branch,n_nodes_degree1,n_nodes_degree3,"
               "n_nodes_degree4,n_nodes_degree5,total_length_all_um,total_length_tubule_um,"
               "total_length_branch_um\n";
        out << m.n_edges_all << ',' << m.n_edges_tubule << ',' << m.n_edges_branch << ','
            << m.n_nodes_degree1 << ',' << m.n_nodes_degree3 << ',' << m.n_nodes_degree4 << ','
            << m.n_nodes_degree5 << ',' << m.total_length_all_um << ','
            << m.total_length_tubule_um << ',' << m.total_length_branch_um << "\n";
        std::cout << "edges " << m.n_edges_all << " (tubule " << m.n_edges_tubule << ", branch "
                  << m.n_edges_branch << ")\n";
    });

    // ---- iqa ---------------------------------------------------------------------
    auto* iq = app.add_subcommand("iqa", "full-reference metrics vs GT");
    std::string iq_gen, iq_gt, iq_out = "iqa.csv";
    std::string iq_region = "r1", iq_model = "model", iq_res = "x2";
    std::string iq_feat_gen, iq_feat_gt;
    iq->add_option("--gen", iq_gen, "generated stack")->required();
    iq->add_option("--gt", iq_gt, "ground-truth stack")->required();
    iq->add_option("--features-gen", iq_feat_gen, "feature matrix for the generated stack");
    iq->add_option("--features-gt", iq_feat_gt, "feature matrix for GT");
    iq->add_option("--region", iq_region, "region tag");
    iq->add_option("--model", iq_model, "model tag");
    iq->add_option("--resolution", iq_res, "resolution tag");
    iq->add_option("--out", iq_out, "output CSV");
    iq->callback([&] {
        PipelineConfig cfg;  // defaults carry the metric list
        GeneratedInput gi{iq_region, iq_model, iq_res, iq_gen, iq_feat_gen, false};
        const auto gt = load_stack(iq_gt);
        const auto gen = load_stack(iq_gen);
        auto recs = detail::iqa_stage(gen, gt, gi, cfg);
        if (!iq_feat_gen.empty() && !iq_feat_gt.empty()) {
            auto f = detail::feature_stage(gi, iq_feat_gt);
            recs.insert(recs.end(), f.begin(), f.end());
        }
        std::ofstream out(iq_out, std::ios::binary);
        out << "region,model,resolution,metric,value,ci_lo,ci_hi\n";
        for (const auto& r : recs) {
            out << r.region << ',' << r.model << ',' << r.resolution << ',' << r.metric << ',';
            if (r.value.state == MetricValue::State::finite)
                out << detail::fmt_value(r.value.value);
            else
                out << (r.value.state == MetricValue::State::infinite ? "inf" : "undefined");
            out << ",,\n";
        }
        std::cout << recs.size() << " metric records -> " << iq_out << "\n";
    });

    // ---- stats -----------------------------------------------------------------
    auto* stc = app.add_subcommand("stats", "Friedman + Nemenyi across regions and models");
    std::string stats_in, stats_out = "stats.csv", stats_metric;
    stc->add_option("--in", stats_in, "metrics CSV (region,model,resolution,metric,value,...)")
        ->required();
    stc->add_option("--metric", stats_metric, "restrict to one metric name");
    stc->add_option("--out", stats_out, "output CSV");
    stc->callback([&] {
        std::ifstream in(stats_in);
        if (!in) throw std::runtime_error("cannot open " + stats_in);
        std::string line;
        std::getline(in, line);  // header
        struct Row {
            std::string region, model, res, metric;
            double value;
        };
        std::vector<Row> rows;
        while (std::getline(in, line)) {
            std::istringstream ss(line);
            Row r;
            std::string value;
            if (!std::getline(ss, r.region, ',') || !std::getline(ss, r.model, ',') ||
                !std::getline(ss, r.res, ',') || !std::getline(ss, r.metric, ',') ||
                !std::getline(ss, value, ','))
                continue;
            if (r.region == "all") continue;
            try {
                r.value = std::stod(value);
            } catch (...) {
                continue;
            }
            if (!stats_metric.empty() && r.metric != stats_metric) continue;
            rows.push_back(std::move(r));
        }
        std::set<std::string> metrics, models, regions, resolutions;
        for (const auto& r : rows) {
            metrics.insert(r.metric);
            models.insert(r.model);
            regions.insert(r.region);
            resolutions.insert(r.res);
        }
        auto lookup = [&](const std::string& reg, const std::string& model,
                          const std::string& res, const std::string& metric)
            -> std::optional<double> {
            for (const auto& r : rows)
                if (r.region == reg && r.model == model && r.res == res && r.metric == metric)
                    return r.value;
            return std::nullopt;
        };
        std::ofstream out(stats_out, std::ios::binary);
        out << "metric,resolution,model_a,model_b,significance\n";
        for (const auto& metric : metrics)
            for (const auto& res : resolutions) {
                std::vector<std::string> model_list(models.begin(), models.end());
                std::vector<std::string> block_list;
                for (const auto& reg : regions) {
                    bool complete = true;
                    for (const auto& m : model_list)
                        if (!lookup(reg, m, res, metric)) complete = false;
                    if (complete) block_list.push_back(reg);
                }
                if (model_list.size() < 2 || block_list.size() < 2 || model_list.size() > 10)
                    continue;
                ScoreMatrix m(int(block_list.size()), int(model_list.size()));
                for (std::size_t b = 0; b < block_list.size(); ++b)
                    for (std::size_t j = 0; j < model_list.size(); ++j)
                        m.at(int(b), int(j)) = *lookup(block_list[b], model_list[j], res, metric);
                const auto fr = friedman(m);
                const auto nem = nemenyi(m);
                std::cout << metric << " @ " << res << ": chi2 " << fr.chi2 << " p " << fr.p
                          << "\n";
                for (std::size_t i = 0; i < model_list.size(); ++i)
                    for (std::size_t j = i + 1; j < model_list.size(); ++j) {
                        out << metric << ',' << res << ',' << model_list[i] << ','
                            << model_list[j] << ',' << stars_label(nem.at(int(i), int(j)))
                            << "\n";
                        std::cout << "  " << model_list[i] << " vs " << model_list[j] << ": "
                                  << stars_label(nem.at(int(i), int(j))) << "\n";
                    }
            }
    });

    // ---- phantom ------------------------------------------------------------------
    auto* ph = app.add_subcommand("phantom", "synthetic network with exact ground truth");
    std::string ph_dir = "phantom_out";
    std::uint64_t ph_seed = 1;
    int ph_nx = 256, ph_ny = 256, ph_nz = 64, ph_tubules = 4, ph_branches = 3, ph_factor = 4;
    double ph_snr = 0.0;
    bool ph_psf = false;
    ph->add_option("--out-dir", ph_dir, "output directory");
    ph->add_option("--seed", ph_seed, "generator seed");
    ph->add_option("--nx", ph_nx);
    ph->add_option("--ny", ph_ny);
    ph->add_option("--nz", ph_nz);
    double ph_rmin = 0.8, ph_rmax = 1.2;
    ph->add_option("--tubules", ph_tubules, "tubule count");
    ph->add_option("--branches", ph_branches, "branch count");
    ph->add_option("--tubule-radius-min", ph_rmin, "tubule radius floor, um");
    ph->add_option("--tubule-radius-max", ph_rmax, "tubule radius ceiling, um");
    ph->add_option("--degrade", ph_factor, "pixel-size degradation factor (2, 4, 8)");
    ph->add_option("--snr", ph_snr, "additive noise SNR (0 = none)");
    ph->add_flag("--psf", ph_psf, "blur with the default confocal PSF");
    ph->callback([&] {
        fs::create_directories(ph_dir);
        PhantomParams p;
        p.nx = ph_nx;
        p.ny = ph_ny;
        p.nz = ph_nz;
        p.n_tubules = ph_tubules;
        p.n_branches = ph_branches;
        p.tubule_radius_um_min = ph_rmin;
        p.tubule_radius_um_max = ph_rmax;
        const auto spec = generate_network(p, ph_seed);
        RenderParams rp;
        rp.apply_psf = ph_psf;
        if (ph_snr > 0.0) rp.snr = ph_snr;
        const auto clean = render(spec, rp);
        save_stack(clean, fs::path(ph_dir) / "clean", Dtype::f32);
        save_stack(degrade(clean, ph_factor), fs::path(ph_dir) / "degraded", Dtype::f32);
        write_json(phantom_spec_to_json(spec), (fs::path(ph_dir) / "spec.json").string());
        const auto gt = phantom_ground_truth(spec);
        std::ofstream out(fs::path(ph_dir) / "ground_truth.csv", std::ios::binary);
        out << "n_edges_all,n_edges_tubule,n_edges_branch,n_nodes_degree1,n_nodes_degree3,"
               "total_length_all_um,total_length_tubule_um,total_length_branch_um\n";
        out << gt.n_edges_all << ',' << gt.n_edges_tubule << ',' << gt.n_edges_branch << ','
            << gt.n_nodes_degree1 << ',' << gt.n_nodes_degree3 << ',' << gt.total_length_all_um
            << ',' << gt.total_length_tubule_um << ',' << gt.total_length_branch_um << "\n";
        std::cout << "phantom written to " << ph_dir << " (junctions "
                  << spec.junctions.size() << ")\n";
    });

    // ---- pipeline -------------------------------------------------------------------
    auto* pl = app.add_subcommand("pipeline", "full assessment from a JSON config");
    std::string pl_config;
    pl->add_option("--config", pl_config, "pipeline config JSON")->required();
    pl->callback([&] {
        std::ifstream in(pl_config);
        if (!in) throw std::runtime_error("cannot open config " + pl_config);
        nlohmann::json j;
        in >> j;
        const auto cfg = pipeline_config_from_json(j);
        const auto bundle = run_pipeline(cfg);
        std::cout << bundle.records.size() << " records, " << bundle.significance.size()
                  << " significance rows -> " << cfg.output_dir.string() << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
