#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tmt/config.hpp"
#include "tmt/evalkit.hpp"
#include "tmt/model.hpp"

namespace tmt {

// Per identity: the last tracklet goes to the gallery, the one before it to
// the queries, the rest to training. Identities with fewer than three
// tracklets train only. Training labels are re-indexed to 0..n-1.
struct SplitData {
    std::vector<Tracklet> train;
    std::vector<std::size_t> train_labels;
    std::size_t num_train_identities = 0;
    std::vector<Tracklet> query, gallery;
};

SplitData split_tracklets(const std::vector<Tracklet>& all);

// test-mode clip sampling, no gradients
Tensor compute_descriptor(const TmtModel& model, const Tracklet& tracklet);

RankingReport evaluate_split(const TmtModel& model, const std::vector<Tracklet>& query,
                             const std::vector<Tracklet>& gallery, const EvalConfig& ec);

// Identity-balanced batches: batch_size/2 identities, two clips each, one
// positive pair per identity and one negative against the next identity.
std::vector<TrainBatch> make_epoch_batches(const SplitData& split, std::size_t batch_size,
                                           std::size_t clip_len, Rng& rng);

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;
    double rank1 = -1.0; // -1 when the epoch was not evaluated
    double map = -1.0;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    std::size_t steps = 0;
};

// Drives epochs over split data. eval_every = 0 scores the held-out split
// only after the final epoch; anything else scores every k-th epoch and the
// last. train.max_steps caps optimizer steps across epochs.
TrainResult run_train(const RunConfig& cfg, TmtModel& model, const std::vector<Tracklet>& data,
                      std::size_t eval_every = 1, std::ostream* progress = nullptr);

std::string metrics_csv(const std::vector<EpochMetrics>& history);

// every non-sidecar regular file, sorted by filename for determinism
std::vector<Tracklet> load_cube_dir(const std::string& dir);

} // namespace tmt
