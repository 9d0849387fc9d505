#include "tmt/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>

#include "tmt/cube_io.hpp"
#include "tmt/errors.hpp"

namespace tmt {

namespace {

void append_g(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

template <typename T>
void shuffle_indices(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.next_u64() % i]);
}

} // namespace

SplitData split_tracklets(const std::vector<Tracklet>& all) {
    std::map<int, std::vector<std::size_t>> by_id; // ordered: stable label assignment
    for (std::size_t i = 0; i < all.size(); ++i) by_id[all[i].identity].push_back(i);

    SplitData split;
    for (const auto& [id, idxs] : by_id) {
        std::size_t train_end = idxs.size() >= 3 ? idxs.size() - 2 : idxs.size();
        bool trains = train_end > 0;
        std::size_t label = split.num_train_identities;
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            const Tracklet& tr = all[idxs[k]];
            if (k < train_end) {
                split.train.push_back(tr);
                split.train_labels.push_back(label);
            } else if (k == train_end) {
                split.query.push_back(tr);
            } else {
                split.gallery.push_back(tr);
            }
        }
        if (trains) ++split.num_train_identities;
    }
    return split;
}

Tensor compute_descriptor(const TmtModel& model, const Tracklet& tracklet) {
    Rng unused(0); // test-mode sampling is deterministic
    Tracklet clip = rrs_sample(tracklet, model.cfg.clip_len, false, unused);
    NoGradGuard ng;
    return trigeminal_forward(model, clip).descriptor.concatenated.value();
}

RankingReport evaluate_split(const TmtModel& model, const std::vector<Tracklet>& query,
                             const std::vector<Tracklet>& gallery, const EvalConfig& ec) {
    if (query.empty() || gallery.empty())
        throw ContractError("evaluation needs nonempty query and gallery sets");
    auto descriptor_matrix = [&](const std::vector<Tracklet>& set, std::vector<int>& ids,
                                 std::vector<int>& cams) {
        Tensor first = compute_descriptor(model, set[0]);
        Tensor mat = Tensor::zeros({set.size(), first.numel()});
        for (std::size_t r = 0; r < set.size(); ++r) {
            Tensor d = r == 0 ? first : compute_descriptor(model, set[r]);
            for (std::size_t j = 0; j < d.numel(); ++j) mat.at(r, j) = d[j];
            ids.push_back(set[r].identity);
            cams.push_back(set[r].camera);
        }
        return mat;
    };
    std::vector<int> qids, qcams, gids, gcams;
    Tensor q = descriptor_matrix(query, qids, qcams);
    Tensor g = descriptor_matrix(gallery, gids, gcams);
    Tensor dist = pairwise_distance(q, g, ec.metric);
    std::size_t max_rank = std::min(ec.max_rank, gallery.size());
    return evaluate_ranking(dist, qids, gids, qcams, gcams, max_rank, ec.policy);
}

std::vector<TrainBatch> make_epoch_batches(const SplitData& split, std::size_t batch_size,
                                           std::size_t clip_len, Rng& rng) {
    if (split.train.empty()) throw ContractError("no training tracklets");
    std::vector<std::vector<std::size_t>> by_label(split.num_train_identities);
    for (std::size_t i = 0; i < split.train.size(); ++i)
        by_label[split.train_labels[i]].push_back(i);

    std::vector<std::size_t> order(split.num_train_identities);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    const std::size_t per_batch = std::max<std::size_t>(1, batch_size / 2);
    std::vector<TrainBatch> out;
    for (std::size_t start = 0; start < order.size(); start += per_batch) {
        std::size_t end = std::min(start + per_batch, order.size());
        TrainBatch b;
        for (std::size_t k = start; k < end; ++k) {
            const auto& pool = by_label[order[k]];
            std::size_t i0 = pool[rng.next_u64() % pool.size()];
            std::size_t i1 = i0;
            if (pool.size() > 1)
                while (i1 == i0) i1 = pool[rng.next_u64() % pool.size()];
            for (std::size_t idx : {i0, i1}) {
                b.clips.push_back(rrs_sample(split.train[idx], clip_len, true, rng));
                b.labels.push_back(order[k]);
            }
        }
        const std::size_t ids_here = end - start;
        for (std::size_t k = 0; k < ids_here; ++k) {
            b.pairs.push_back({2 * k, 2 * k + 1, true});
            if (ids_here > 1) b.pairs.push_back({2 * k, 2 * ((k + 1) % ids_here), false});
        }
        out.push_back(std::move(b));
    }
    return out;
}

TrainResult run_train(const RunConfig& cfg, TmtModel& model, const std::vector<Tracklet>& data,
                      std::size_t eval_every, std::ostream* progress) {
    SplitData split = split_tracklets(data);
    if (split.train.empty()) throw ContractError("no training tracklets after the split");
    const TrainConfig& tc = cfg.train;
    model.init_oim(split.num_train_identities, tc.oim_gamma, tc.oim_temperature);

    Rng rng(tc.seed);
    SgdState sgd;
    TrainResult res;
    const bool can_eval = !split.query.empty() && !split.gallery.empty();
    bool stop = false;
    for (std::size_t epoch = 0; epoch < tc.epochs && !stop; ++epoch) {
        const double lr = tc.lr_at_epoch(epoch);
        double loss_sum = 0.0;
        std::size_t steps_here = 0;
        for (TrainBatch& batch : make_epoch_batches(split, tc.batch_size, cfg.model.clip_len, rng)) {
            loss_sum += train_step(model, batch, tc, sgd, lr).total;
            ++steps_here;
            ++res.steps;
            if (tc.max_steps && res.steps >= tc.max_steps) {
                stop = true;
                break;
            }
        }
        const bool last = stop || epoch + 1 == tc.epochs;
        EpochMetrics em;
        em.epoch = epoch;
        em.loss = steps_here ? loss_sum / static_cast<double>(steps_here) : 0.0;
        if (can_eval && (eval_every ? ((epoch + 1) % eval_every == 0 || last) : last)) {
            RankingReport rep = evaluate_split(model, split.query, split.gallery, cfg.eval);
            em.rank1 = rep.cmc.empty() ? 0.0 : rep.cmc[0];
            em.map = rep.map;
        }
        res.history.push_back(em);
        if (progress) {
            char line[160];
            std::snprintf(line, sizeof(line), "epoch %zu  lr %.3g  loss %.6f  rank1 %.4f  map %.4f\n",
                          epoch, lr, em.loss, em.rank1, em.map);
            *progress << line << std::flush;
        }
    }
    return res;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,loss,rank1,map\n";
    for (const EpochMetrics& em : history) {
        out += std::to_string(em.epoch);
        out += ',';
        append_g(out, em.loss);
        out += ',';
        append_g(out, em.rank1);
        out += ',';
        append_g(out, em.map);
        out += '\n';
    }
    return out;
}

std::vector<Tracklet> load_cube_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string p = entry.path().string();
        if (p.size() >= 5 && p.compare(p.size() - 5, 5, ".json") == 0) continue; // sidecar
        paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError("no cube files in " + dir);
    std::vector<Tracklet> out;
    out.reserve(paths.size());
    for (const std::string& p : paths) out.push_back(cube_to_tracklet(read_cube(p)));
    return out;
}

} // namespace tmt
