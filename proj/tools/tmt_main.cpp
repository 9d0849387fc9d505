#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tmt/commands.hpp"
#include "tmt/config.hpp"
#include "tmt/errors.hpp"

namespace {

// flag overrides staged on top of whatever --config loaded
struct Overrides {
    std::string config_path, out_dir, data_dir;
    std::uint64_t seed = 0;
    std::size_t epochs = 0, max_steps = 0, clip_len = 0, depth_self = 0, depth_cross = 0;
    bool hi_res = false, literal_eq5 = false, literal_eq8 = false, literal_eq12 = false;

    CLI::Option *o_config = nullptr, *o_out = nullptr, *o_data = nullptr, *o_seed = nullptr,
                *o_epochs = nullptr, *o_max_steps = nullptr, *o_clip = nullptr,
                *o_depth_self = nullptr, *o_depth_cross = nullptr;
};

void add_shared_flags(CLI::App* sub, Overrides& o) {
    o.o_config = sub->add_option("--config", o.config_path, "JSON run config");
    o.o_seed = sub->add_option("--seed", o.seed, "training / init seed");
    o.o_out = sub->add_option("--out", o.out_dir, "output directory");
    o.o_epochs = sub->add_option("--epochs", o.epochs, "training epochs");
    o.o_max_steps = sub->add_option("--max-steps", o.max_steps, "cap on optimizer steps");
    o.o_clip = sub->add_option("--T", o.clip_len, "frames per sampled clip");
    o.o_depth_self = sub->add_option("--depth-self", o.depth_self, "self-view blocks per view");
    o.o_depth_cross = sub->add_option("--depth-cross", o.depth_cross, "cross-view blocks");
    sub->add_flag("--hi-res", o.hi_res, "64x32 inputs instead of 32x16");
    sub->add_flag("--literal-eq5", o.literal_eq5, "literal pooling summand variant");
    sub->add_flag("--literal-eq8", o.literal_eq8, "bare feed-forward variant, self-view");
    sub->add_flag("--literal-eq12", o.literal_eq12, "bare feed-forward variant, cross-view");
}

tmt::RunConfig resolve(const Overrides& o) {
    tmt::RunConfig cfg;
    if (o.o_config->count()) cfg = tmt::load_run_config(o.config_path);
    if (o.o_seed->count()) cfg.train.seed = o.seed;
    if (o.o_out->count()) cfg.out_dir = o.out_dir;
    if (o.o_data && o.o_data->count()) cfg.data_dir = o.data_dir;
    if (o.o_epochs->count()) cfg.train.epochs = o.epochs;
    if (o.o_max_steps->count()) cfg.train.max_steps = o.max_steps;
    if (o.o_clip->count()) cfg.model.clip_len = o.clip_len;
    if (o.o_depth_self->count()) cfg.model.depth_selfview = o.depth_self;
    if (o.o_depth_cross->count()) cfg.model.depth_crossview = o.depth_cross;
    if (o.hi_res) {
        cfg.model.hi_res = true;
        if (cfg.model.stub_extractor && cfg.data_dir.empty()) {
            cfg.synth.image_h = cfg.model.image_h();
            cfg.synth.image_w = cfg.model.image_w();
        }
    }
    if (o.literal_eq5) cfg.model.literal_eq5 = true;
    if (o.literal_eq8) cfg.model.literal_eq8 = true;
    if (o.literal_eq12) cfg.model.literal_eq12 = true;
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        if (comma > start) out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trigeminal transformer toolkit: train, eval, gradcheck, bench, inspect"};
    app.require_subcommand(1);

    Overrides train_o;
    CLI::App* train = app.add_subcommand("train", "train a model, write checkpoint + metrics CSV");
    add_shared_flags(train, train_o);
    train_o.o_data = train->add_option("--data", train_o.data_dir,
                                       "cube directory (default: synthetic data)");

    std::string ckpt, gallery_dir, query_dir, metric = "euclidean", policy = "cross_camera";
    std::size_t max_rank = 10;
    CLI::App* eval = app.add_subcommand("eval", "score query cubes against gallery cubes");
    eval->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    eval->add_option("--gallery", gallery_dir, "gallery cube directory")->required();
    eval->add_option("--query", query_dir, "query cube directory")->required();
    CLI::Option* o_metric = eval->add_option("--metric", metric, "euclidean | cosine");
    CLI::Option* o_policy = eval->add_option("--policy", policy, "cross_camera | single_gallery");
    CLI::Option* o_max_rank = eval->add_option("--max-rank", max_rank, "CMC depth");

    std::string corrupt;
    double h = 1e-5;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check per block");
    gradcheck->set_help_flag("--help", "print help"); // frees -h/--h for the step size
    gradcheck->add_option("--corrupt", corrupt, "fault-inject this block (negative control)");
    gradcheck->add_option("--h", h, "finite-difference step");

    Overrides bench_o;
    std::string axis, values_csv;
    std::size_t num_seeds = 1;
    CLI::App* bench = app.add_subcommand("bench", "sweep one axis, training per value");
    add_shared_flags(bench, bench_o);
    bench->add_option("--axis", axis,
                      "T | depth_selfview | depth_crossview | hi_res | views | cross_on_off")
        ->required();
    bench->add_option("--values", values_csv, "comma-separated axis values")->required();
    bench->add_option("--seeds", num_seeds, "repeats per value (mean/std)");

    std::string cube_path;
    CLI::App* inspect = app.add_subcommand("inspect", "print a cube file's header and stats");
    inspect->add_option("cube", cube_path, "cube file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            tmt::cmd_train(resolve(train_o), std::cout);
        } else if (*eval) {
            tmt::RunConfig cfg;
            cfg.checkpoint = ckpt;
            cfg.gallery_dir = gallery_dir;
            cfg.query_dir = query_dir;
            if (o_metric->count()) {
                if (metric == "euclidean") cfg.eval.metric = tmt::DistanceMetric::euclidean;
                else if (metric == "cosine") cfg.eval.metric = tmt::DistanceMetric::cosine;
                else throw tmt::ConfigError("unknown metric \"" + metric + "\"");
            }
            if (o_policy->count()) {
                if (policy == "cross_camera") cfg.eval.policy = tmt::GalleryPolicy::cross_camera;
                else if (policy == "single_gallery")
                    cfg.eval.policy = tmt::GalleryPolicy::single_gallery;
                else throw tmt::ConfigError("unknown policy \"" + policy + "\"");
            }
            if (o_max_rank->count()) cfg.eval.max_rank = max_rank;
            tmt::cmd_eval(cfg, std::cout);
        } else if (*gradcheck) {
            auto rows = tmt::cmd_gradcheck(h, corrupt, std::cout);
            for (const auto& row : rows)
                if (!row.pass) return 2;
        } else if (*bench) {
            tmt::cmd_bench(resolve(bench_o), axis, split_csv(values_csv), num_seeds, std::cout);
        } else if (*inspect) {
            tmt::cmd_inspect(cube_path, std::cout);
        }
    } catch (const tmt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const tmt::ContractError& e) {
        std::cerr << "contract error: " << e.what() << "\n";
        return 1;
    } catch (const tmt::DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 1;
    } catch (const tmt::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const tmt::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const tmt::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
