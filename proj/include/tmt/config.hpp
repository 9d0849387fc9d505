#pragma once

#include <string>

#include "tmt/data.hpp"
#include "tmt/evalkit.hpp"
#include "tmt/model.hpp"

namespace tmt {

struct EvalConfig {
    DistanceMetric metric = DistanceMetric::euclidean;
    GalleryPolicy policy = GalleryPolicy::cross_camera;
    std::size_t max_rank = 10;
};

// Everything one command run needs. Loaded from JSON, overridden by flags,
// then validated in one shot so a broken file reports all problems at once.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SynthSpec synth;
    EvalConfig eval;
    std::string out_dir = "out";
    std::string data_dir;    // cube directory for ingest training; empty = synthetic
    std::string gallery_dir; // eval inputs
    std::string query_dir;
    std::string checkpoint;

    void validate() const;
};

// Strict JSON: unknown keys are config errors, missing keys keep defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical full echo (sorted keys); embedded in checkpoints and reproducible
// byte-for-byte for identical configs.
std::string run_config_json(const RunConfig& cfg);

const char* pipeline_name(Pipeline p);
Pipeline parse_pipeline(const std::string& name);

} // namespace tmt
