#include "tmt/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "json.hpp"

#include "tmt/checkpoint.hpp"
#include "tmt/crossview.hpp"
#include "tmt/cube_io.hpp"
#include "tmt/errors.hpp"
#include "tmt/gradcheck.hpp"
#include "tmt/ops.hpp"
#include "tmt/pooling.hpp"
#include "tmt/selfview.hpp"

namespace tmt {

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + path);
}

void append_g(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

bool parse_onoff(const std::string& v, const char* what) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError(std::string("bad ") + what + " value \"" + v + "\"");
}

std::size_t parse_count(const std::string& v, const char* what) {
    try {
        std::size_t pos = 0;
        unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(std::string("bad ") + what + " value \"" + v + "\"");
    }
}

RunConfig apply_axis(const RunConfig& base, const std::string& axis, const std::string& value) {
    RunConfig cfg = base;
    if (axis == "T") {
        cfg.model.clip_len = parse_count(value, "T");
    } else if (axis == "depth_selfview") {
        cfg.model.depth_selfview = parse_count(value, "depth_selfview");
    } else if (axis == "depth_crossview") {
        cfg.model.depth_crossview = parse_count(value, "depth_crossview");
    } else if (axis == "hi_res") {
        cfg.model.hi_res = parse_onoff(value, "hi_res");
        if (cfg.model.stub_extractor && cfg.data_dir.empty()) {
            cfg.synth.image_h = cfg.model.image_h();
            cfg.synth.image_w = cfg.model.image_w();
        }
    } else if (axis == "views") {
        cfg.model.use_spatial = value == "spatial" || value == "all";
        cfg.model.use_temporal = value == "temporal" || value == "all";
        cfg.model.use_st = value == "st" || value == "all";
        if (!cfg.model.use_spatial && !cfg.model.use_temporal && !cfg.model.use_st)
            throw ConfigError("bad views value \"" + value +
                              "\" (spatial, temporal, st, all)");
        // cross-view fusion needs all three views; single-view rows drop it
        if (value != "all") cfg.model.pipeline = Pipeline::selfview_only;
    } else if (axis == "cross_on_off") {
        cfg.model.pipeline =
            parse_onoff(value, "cross_on_off") ? Pipeline::full : Pipeline::selfview_only;
    } else {
        throw ConfigError("unknown bench axis \"" + axis +
                          "\" (T, depth_selfview, depth_crossview, hi_res, views, cross_on_off)");
    }
    return cfg;
}

} // namespace

TrainResult cmd_train(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    std::vector<Tracklet> data =
        cfg.data_dir.empty() ? synth_generate(cfg.synth) : load_cube_dir(cfg.data_dir);
    TmtModel model = build_model(cfg.model, cfg.train.seed);
    TrainResult res = run_train(cfg, model, data, 1, &out);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
    write_file(cfg.out_dir + "/metrics.csv", metrics_csv(res.history));
    save_checkpoint(cfg.out_dir + "/model.ckpt", model, run_config_json(cfg));
    out << "wrote " << cfg.out_dir << "/model.ckpt and metrics.csv (" << res.steps
        << " steps)\n";
    return res;
}

RankingReport cmd_eval(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> missing;
    if (cfg.checkpoint.empty()) missing.push_back("checkpoint");
    if (cfg.gallery_dir.empty()) missing.push_back("gallery_dir");
    if (cfg.query_dir.empty()) missing.push_back("query_dir");
    if (!missing.empty()) {
        std::string msg = "eval needs:";
        for (const std::string& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
    std::string echo = read_checkpoint_config(cfg.checkpoint);
    RunConfig saved = parse_run_config(echo);
    TmtModel model = build_model(saved.model, 0);
    load_checkpoint(cfg.checkpoint, model);
    std::vector<Tracklet> gallery = load_cube_dir(cfg.gallery_dir);
    std::vector<Tracklet> query = load_cube_dir(cfg.query_dir);
    RankingReport rep = evaluate_split(model, query, gallery, cfg.eval);
    out << ranking_report_json(rep, echo) << "\n";
    return rep;
}

std::vector<GradcheckRow> cmd_gradcheck(double h, const std::string& corrupt_block,
                                        std::ostream& out) {
    if (h <= 0) throw ConfigError("step size must be positive");
    constexpr std::size_t T = 3, HW = 4, C = 8, NH = 2;
    const HeadConfig hc{NH, C};
    const double tol = 1e-4;

    struct Case {
        std::string name;
        std::function<GradCheckReport(const std::function<void(ParamTape&)>&, double)> run;
    };
    auto rnd = [](Rng& rng, std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        return t;
    };

    std::vector<Case> cases;
    for (bool literal : {false, true})
        for (bool spatial : {false, true}) {
            std::string name = std::string("pooling_") + (spatial ? "spatial" : "temporal") +
                               (literal ? "_literal" : "");
            cases.push_back({name, [=](const auto& hook, double step) {
                                 Rng rng(41);
                                 ParamTape tape;
                                 Var cube = tape.add("cube", rnd(rng, {T, HW, C}));
                                 Var proj = tape.add("proj", rnd(rng, {C, C}));
                                 auto loss = [&]() {
                                     Var pooled = spatial
                                                      ? spatial_sa_pool(cube, proj, nullptr, literal)
                                                      : temporal_sa_pool(cube, proj, nullptr, literal);
                                     return sum_all(mul(pooled, pooled));
                                 };
                                 return finite_diff_check(loss, tape, step, hook);
                             }});
        }
    cases.push_back({"selfview", [=](const auto& hook, double step) {
                         Rng rng(42);
                         ParamTape tape;
                         Var tokens = tape.add("tokens", rnd(rng, {HW, C}));
                         Var pe = tape.add("pe", rnd(rng, {HW, C}));
                         SelfViewBlockParams p = make_selfview_block_params(tape, "blk", hc, rng);
                         auto loss = [&]() {
                             Var y = selfview_block(tokens, p, hc, pe);
                             return sum_all(mul(y, y));
                         };
                         return finite_diff_check(loss, tape, step, hook);
                     }});
    cases.push_back({"crossview", [=](const auto& hook, double step) {
                         Rng rng(43);
                         ParamTape tape;
                         ViewFeatureSet views;
                         views.spatial = tape.add("tokens_s", rnd(rng, {HW, C}));
                         views.temporal = tape.add("tokens_t", rnd(rng, {T, C}));
                         views.spatiotemporal = tape.add("tokens_st", rnd(rng, {T * HW, C}));
                         CrossViewBlockParams p = make_crossview_block_params(tape, "blk", hc, rng);
                         auto loss = [&]() {
                             ViewFeatureSet y = crossview_block(views, p, hc);
                             Var s = sum_all(mul(y.spatial, y.spatial));
                             s = add(s, sum_all(mul(y.temporal, y.temporal)));
                             return add(s, sum_all(mul(y.spatiotemporal, y.spatiotemporal)));
                         };
                         return finite_diff_check(loss, tape, step, hook);
                     }});
    cases.push_back({"verification", [=](const auto& hook, double step) {
                         Rng rng(44);
                         ParamTape tape;
                         Var a = tape.add("a", rnd(rng, {C}));
                         Var b = tape.add("b", rnd(rng, {C}));
                         Var w = tape.add("w", Tensor({1}, {1.2}));
                         Var bias = tape.add("bias", Tensor({1}, {-0.1}));
                         auto loss = [&]() {
                             return add(verification_loss(a, b, true, w, bias),
                                        verification_loss(a, b, false, w, bias));
                         };
                         return finite_diff_check(loss, tape, step, hook);
                     }});
    cases.push_back({"oim", [=](const auto& hook, double step) {
                         Rng rng(45);
                         OimState state = make_oim_state(3, C);
                         for (std::size_t r = 0; r < 3; ++r) {
                             Tensor row = rnd(rng, {C});
                             double n = 0;
                             for (std::size_t i = 0; i < C; ++i) n += row[i] * row[i];
                             n = std::sqrt(n);
                             for (std::size_t i = 0; i < C; ++i)
                                 state.lookup.at(r, i) = row[i] / n;
                         }
                         ParamTape tape;
                         Var f = tape.add("feature", rnd(rng, {C}));
                         f.node_->value[0] += 1.5; // keep the norm away from zero
                         auto loss = [&]() { return oim_loss(f, 1, state, false); };
                         return finite_diff_check(loss, tape, step, hook);
                     }});

    bool corrupt_hit = corrupt_block.empty();
    std::vector<GradcheckRow> rows;
    for (Case& c : cases) {
        std::function<void(ParamTape&)> hook;
        if (!corrupt_block.empty() && c.name.rfind(corrupt_block, 0) == 0) {
            corrupt_hit = true;
            hook = [](ParamTape& tape) {
                Var p = tape.param(0);
                p.grad()[0] += 1.0;
            };
        }
        GradCheckReport rep = c.run(hook, h);
        GradcheckRow row{c.name, rep.max_rel_error, rep.max_rel_error < tol};
        char line[128];
        std::snprintf(line, sizeof(line), "%-26s max_rel_error %.3e  %s\n", row.block.c_str(),
                      row.max_rel_error, row.pass ? "PASS" : "FAIL");
        out << line;
        rows.push_back(row);
    }
    if (!corrupt_hit)
        throw ConfigError("--corrupt \"" + corrupt_block + "\" matches no block");
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "axis,value,seeds,rank1_mean,rank1_std,map_mean,map_std\n";
    for (const BenchRow& r : rows) {
        out += r.axis + "," + r.value + "," + std::to_string(r.seeds) + ",";
        append_g(out, r.rank1_mean);
        out += ',';
        append_g(out, r.rank1_std);
        out += ',';
        append_g(out, r.map_mean);
        out += ',';
        append_g(out, r.map_std);
        out += '\n';
    }
    return out;
}

std::vector<BenchRow> cmd_bench(const RunConfig& base, const std::string& axis,
                                const std::vector<std::string>& values, std::size_t num_seeds,
                                std::ostream& out) {
    if (values.empty()) throw ConfigError("bench needs at least one axis value");
    if (num_seeds == 0) throw ConfigError("bench needs at least one seed");
    // validate the whole sweep before any training starts
    std::vector<RunConfig> sweep;
    for (const std::string& v : values) {
        RunConfig cfg = apply_axis(base, axis, v);
        cfg.validate();
        sweep.push_back(std::move(cfg));
    }

    std::vector<BenchRow> rows;
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
        const RunConfig& cfg = sweep[vi];
        std::vector<Tracklet> data =
            cfg.data_dir.empty() ? synth_generate(cfg.synth) : load_cube_dir(cfg.data_dir);
        BenchRow row;
        row.axis = axis;
        row.value = values[vi];
        row.seeds = num_seeds;
        std::vector<double> rank1s, maps;
        for (std::size_t s = 0; s < num_seeds; ++s) {
            RunConfig variant = cfg;
            variant.train.seed = cfg.train.seed + s;
            TmtModel model = build_model(variant.model, variant.train.seed);
            TrainResult res = run_train(variant, model, data, 0);
            double r1 = res.history.empty() ? 0.0 : res.history.back().rank1;
            double map = res.history.empty() ? 0.0 : res.history.back().map;
            rank1s.push_back(r1);
            maps.push_back(map);
            out << axis << "=" << values[vi] << " seed " << variant.train.seed << "  rank1 "
                << r1 << "  map " << map << "\n"
                << std::flush;
        }
        auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
            mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            sd = std::sqrt(var / static_cast<double>(xs.size()));
        };
        mean_std(rank1s, row.rank1_mean, row.rank1_std);
        mean_std(maps, row.map_mean, row.map_std);
        rows.push_back(row);
    }

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(base.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + base.out_dir);
    write_file(base.out_dir + "/bench.csv", bench_csv(rows));
    out << "wrote " << base.out_dir << "/bench.csv\n";
    return rows;
}

void cmd_inspect(const std::string& cube_path, std::ostream& out) {
    CubeRecord rec = read_cube(cube_path);
    nlohmann::json j;
    j["t"] = rec.t;
    j["h"] = rec.h;
    j["w"] = rec.w;
    j["c"] = rec.c;
    j["identity"] = rec.identity;
    j["camera"] = rec.camera;
    j["source"] = rec.source;
    const char* names[3] = {"spatial", "temporal", "spatiotemporal"};
    const Tensor* views[3] = {&rec.spatial, &rec.temporal, &rec.spatiotemporal};
    for (int v = 0; v < 3; ++v) {
        double lo = views[v]->numel() ? (*views[v])[0] : 0.0, hi = lo, sum = 0.0;
        for (std::size_t i = 0; i < views[v]->numel(); ++i) {
            double x = (*views[v])[i];
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            sum += x;
        }
        j["views"][names[v]] = {
            {"min", lo},
            {"max", hi},
            {"mean", views[v]->numel() ? sum / static_cast<double>(views[v]->numel()) : 0.0}};
    }
    out << j.dump(2) << "\n";
}

} // namespace tmt
