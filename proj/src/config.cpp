#include "tmt/config.hpp"

#include <fstream>
#include <set>
#include <vector>

#include "json.hpp"

#include "tmt/errors.hpp"

namespace tmt {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const char* section, const std::set<std::string>& allowed) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError(std::string("unknown key \"") + item.key() + "\" in " + section);
}

template <typename T>
void pick(const json& obj, const char* key, T& into) {
    if (obj.contains(key)) into = obj.at(key).get<T>();
}

const char* metric_name(DistanceMetric m) {
    return m == DistanceMetric::euclidean ? "euclidean" : "cosine";
}

const char* policy_name(GalleryPolicy p) {
    return p == GalleryPolicy::cross_camera ? "cross_camera" : "single_gallery";
}

} // namespace

const char* pipeline_name(Pipeline p) {
    switch (p) {
        case Pipeline::full: return "full";
        case Pipeline::selfview_only: return "selfview_only";
        case Pipeline::avgpool: return "avgpool";
    }
    return "full";
}

Pipeline parse_pipeline(const std::string& name) {
    if (name == "full") return Pipeline::full;
    if (name == "selfview_only") return Pipeline::selfview_only;
    if (name == "avgpool") return Pipeline::avgpool;
    throw ConfigError("unknown pipeline \"" + name + "\" (full, selfview_only, avgpool)");
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(root, "config", {"model", "train", "synth", "eval", "paths"});

    RunConfig cfg;
    try {
        if (root.contains("model")) {
            const json& m = root.at("model");
            check_keys(m, "model",
                       {"channels", "num_heads", "depth_selfview", "depth_crossview", "clip_len",
                        "use_pe", "literal_eq5", "literal_eq8", "literal_eq12",
                        "share_kv_across_targets", "pipeline", "use_spatial", "use_temporal",
                        "use_st", "stub_extractor", "hi_res", "feature_h", "feature_w"});
            pick(m, "channels", cfg.model.channels);
            pick(m, "num_heads", cfg.model.num_heads);
            pick(m, "depth_selfview", cfg.model.depth_selfview);
            pick(m, "depth_crossview", cfg.model.depth_crossview);
            pick(m, "clip_len", cfg.model.clip_len);
            pick(m, "use_pe", cfg.model.use_pe);
            pick(m, "literal_eq5", cfg.model.literal_eq5);
            pick(m, "literal_eq8", cfg.model.literal_eq8);
            pick(m, "literal_eq12", cfg.model.literal_eq12);
            pick(m, "share_kv_across_targets", cfg.model.share_kv_across_targets);
            if (m.contains("pipeline"))
                cfg.model.pipeline = parse_pipeline(m.at("pipeline").get<std::string>());
            pick(m, "use_spatial", cfg.model.use_spatial);
            pick(m, "use_temporal", cfg.model.use_temporal);
            pick(m, "use_st", cfg.model.use_st);
            pick(m, "stub_extractor", cfg.model.stub_extractor);
            pick(m, "hi_res", cfg.model.hi_res);
            pick(m, "feature_h", cfg.model.feature_h);
            pick(m, "feature_w", cfg.model.feature_w);
        }
        if (root.contains("train")) {
            const json& t = root.at("train");
            check_keys(t, "train",
                       {"epochs", "lr", "lr_decay_factor", "lr_decay_period", "weight_decay",
                        "momentum", "batch_size", "seed", "oim_gamma", "oim_temperature",
                        "framewise_oim", "max_steps"});
            pick(t, "epochs", cfg.train.epochs);
            pick(t, "lr", cfg.train.lr);
            pick(t, "lr_decay_factor", cfg.train.lr_decay_factor);
            pick(t, "lr_decay_period", cfg.train.lr_decay_period);
            pick(t, "weight_decay", cfg.train.weight_decay);
            pick(t, "momentum", cfg.train.momentum);
            pick(t, "batch_size", cfg.train.batch_size);
            pick(t, "seed", cfg.train.seed);
            pick(t, "oim_gamma", cfg.train.oim_gamma);
            pick(t, "oim_temperature", cfg.train.oim_temperature);
            pick(t, "framewise_oim", cfg.train.framewise_oim);
            pick(t, "max_steps", cfg.train.max_steps);
        }
        if (root.contains("synth")) {
            const json& s = root.at("synth");
            check_keys(s, "synth",
                       {"num_identities", "tracklets_per_id", "frames_per_tracklet", "image_h",
                        "image_w", "noise_std", "seed"});
            pick(s, "num_identities", cfg.synth.num_identities);
            pick(s, "tracklets_per_id", cfg.synth.tracklets_per_id);
            pick(s, "frames_per_tracklet", cfg.synth.frames_per_tracklet);
            pick(s, "image_h", cfg.synth.image_h);
            pick(s, "image_w", cfg.synth.image_w);
            pick(s, "noise_std", cfg.synth.noise_std);
            pick(s, "seed", cfg.synth.seed);
        }
        if (root.contains("eval")) {
            const json& e = root.at("eval");
            check_keys(e, "eval", {"metric", "policy", "max_rank"});
            if (e.contains("metric")) {
                std::string m = e.at("metric").get<std::string>();
                if (m == "euclidean") cfg.eval.metric = DistanceMetric::euclidean;
                else if (m == "cosine") cfg.eval.metric = DistanceMetric::cosine;
                else throw ConfigError("unknown metric \"" + m + "\" (euclidean, cosine)");
            }
            if (e.contains("policy")) {
                std::string p = e.at("policy").get<std::string>();
                if (p == "cross_camera") cfg.eval.policy = GalleryPolicy::cross_camera;
                else if (p == "single_gallery") cfg.eval.policy = GalleryPolicy::single_gallery;
                else throw ConfigError("unknown policy \"" + p +
                                       "\" (cross_camera, single_gallery)");
            }
            pick(e, "max_rank", cfg.eval.max_rank);
        }
        if (root.contains("paths")) {
            const json& p = root.at("paths");
            check_keys(p, "paths", {"out_dir", "data_dir", "gallery_dir", "query_dir", "checkpoint"});
            pick(p, "out_dir", cfg.out_dir);
            pick(p, "data_dir", cfg.data_dir);
            pick(p, "gallery_dir", cfg.gallery_dir);
            pick(p, "query_dir", cfg.query_dir);
            pick(p, "checkpoint", cfg.checkpoint);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

void RunConfig::validate() const {
    std::vector<std::string> bad;
    auto collect = [&](const auto& section) {
        try {
            section.validate();
        } catch (const ConfigError& e) {
            bad.push_back(e.what());
        }
    };
    collect(model);
    collect(train);
    collect(synth);
    if (eval.max_rank == 0) bad.push_back("eval.max_rank must be positive");
    if (model.stub_extractor && data_dir.empty() &&
        (synth.image_h != model.image_h() || synth.image_w != model.image_w()))
        bad.push_back("synthetic image size " + std::to_string(synth.image_h) + "x" +
                      std::to_string(synth.image_w) + " does not match the extractor input " +
                      std::to_string(model.image_h()) + "x" + std::to_string(model.image_w()));
    if (!model.stub_extractor && data_dir.empty() && gallery_dir.empty() && query_dir.empty() &&
        checkpoint.empty())
        bad.push_back("ingest models need cube data (data_dir or gallery/query dirs)");
    if (!bad.empty()) {
        std::string msg = "invalid run config:";
        for (const std::string& b : bad) msg += "\n  - " + b;
        throw ConfigError(msg);
    }
}

std::string run_config_json(const RunConfig& cfg) {
    json root;
    root["model"] = {{"channels", cfg.model.channels},
                     {"num_heads", cfg.model.num_heads},
                     {"depth_selfview", cfg.model.depth_selfview},
                     {"depth_crossview", cfg.model.depth_crossview},
                     {"clip_len", cfg.model.clip_len},
                     {"use_pe", cfg.model.use_pe},
                     {"literal_eq5", cfg.model.literal_eq5},
                     {"literal_eq8", cfg.model.literal_eq8},
                     {"literal_eq12", cfg.model.literal_eq12},
                     {"share_kv_across_targets", cfg.model.share_kv_across_targets},
                     {"pipeline", pipeline_name(cfg.model.pipeline)},
                     {"use_spatial", cfg.model.use_spatial},
                     {"use_temporal", cfg.model.use_temporal},
                     {"use_st", cfg.model.use_st},
                     {"stub_extractor", cfg.model.stub_extractor},
                     {"hi_res", cfg.model.hi_res},
                     {"feature_h", cfg.model.feature_h},
                     {"feature_w", cfg.model.feature_w}};
    root["train"] = {{"epochs", cfg.train.epochs},
                     {"lr", cfg.train.lr},
                     {"lr_decay_factor", cfg.train.lr_decay_factor},
                     {"lr_decay_period", cfg.train.lr_decay_period},
                     {"weight_decay", cfg.train.weight_decay},
                     {"momentum", cfg.train.momentum},
                     {"batch_size", cfg.train.batch_size},
                     {"seed", cfg.train.seed},
                     {"oim_gamma", cfg.train.oim_gamma},
                     {"oim_temperature", cfg.train.oim_temperature},
                     {"framewise_oim", cfg.train.framewise_oim},
                     {"max_steps", cfg.train.max_steps}};
    root["synth"] = {{"num_identities", cfg.synth.num_identities},
                     {"tracklets_per_id", cfg.synth.tracklets_per_id},
                     {"frames_per_tracklet", cfg.synth.frames_per_tracklet},
                     {"image_h", cfg.synth.image_h},
                     {"image_w", cfg.synth.image_w},
                     {"noise_std", cfg.synth.noise_std},
                     {"seed", cfg.synth.seed}};
    root["eval"] = {{"metric", metric_name(cfg.eval.metric)},
                    {"policy", policy_name(cfg.eval.policy)},
                    {"max_rank", cfg.eval.max_rank}};
    root["paths"] = {{"out_dir", cfg.out_dir},
                     {"data_dir", cfg.data_dir},
                     {"gallery_dir", cfg.gallery_dir},
                     {"query_dir", cfg.query_dir},
                     {"checkpoint", cfg.checkpoint}};
    return root.dump(2);
}

} // namespace tmt
