#include "tmt/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "tmt/errors.hpp"

namespace tmt {

namespace {

void check_ranking_inputs(const Tensor& distances, const std::vector<int>& query_ids,
                          const std::vector<int>& gallery_ids,
                          const std::vector<int>& query_cams,
                          const std::vector<int>& gallery_cams) {
    if (distances.rank() != 2) {
        throw DimensionError("ranking: distance matrix must be 2-d, got " +
                             distances.shape_string());
    }
    std::size_t nq = distances.shape()[0], ng = distances.shape()[1];
    if (query_ids.size() != nq || query_cams.size() != nq || gallery_ids.size() != ng ||
        gallery_cams.size() != ng) {
        throw DimensionError("ranking: label arrays (" + std::to_string(query_ids.size()) + "/" +
                             std::to_string(query_cams.size()) + " query, " +
                             std::to_string(gallery_ids.size()) + "/" +
                             std::to_string(gallery_cams.size()) +
                             " gallery) do not match distances " + distances.shape_string());
    }
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

Tensor pairwise_distance(const Tensor& queries, const Tensor& gallery, DistanceMetric metric) {
    if (queries.rank() != 2 || gallery.rank() != 2 || queries.shape()[1] != gallery.shape()[1]) {
        throw DimensionError("pairwise_distance: incompatible shapes " + queries.shape_string() +
                             " vs " + gallery.shape_string());
    }
    std::size_t nq = queries.shape()[0], ng = gallery.shape()[0], d = queries.shape()[1];
    Tensor out({nq, ng});

    if (metric == DistanceMetric::euclidean) {
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t j = 0; j < ng; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    double diff = queries.at(i, k) - gallery.at(j, k);
                    s += diff * diff;
                }
                out.at(i, j) = std::sqrt(s);
            }
        return out;
    }

    std::vector<double> qn(nq), gn(ng);
    for (std::size_t i = 0; i < nq; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += queries.at(i, k) * queries.at(i, k);
        if (s <= 0.0) throw ContractError("pairwise_distance: zero-norm query row " +
                                          std::to_string(i));
        qn[i] = std::sqrt(s);
    }
    for (std::size_t j = 0; j < ng; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += gallery.at(j, k) * gallery.at(j, k);
        if (s <= 0.0) throw ContractError("pairwise_distance: zero-norm gallery row " +
                                          std::to_string(j));
        gn[j] = std::sqrt(s);
    }
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < ng; ++j) {
            double dotv = 0.0;
            for (std::size_t k = 0; k < d; ++k) dotv += queries.at(i, k) * gallery.at(j, k);
            out.at(i, j) = 1.0 - dotv / (qn[i] * gn[j]);
        }
    return out;
}

RankingReport evaluate_ranking(const Tensor& distances, const std::vector<int>& query_ids,
                               const std::vector<int>& gallery_ids,
                               const std::vector<int>& query_cams,
                               const std::vector<int>& gallery_cams, std::size_t max_rank,
                               GalleryPolicy policy) {
    check_ranking_inputs(distances, query_ids, gallery_ids, query_cams, gallery_cams);
    if (max_rank == 0) throw ContractError("ranking: max_rank must be >= 1");

    std::size_t nq = distances.shape()[0], ng = distances.shape()[1];
    RankingReport rep;
    rep.cmc.assign(max_rank, 0.0);
    rep.per_query_ap.assign(nq, -1.0);

    std::size_t scored = 0;
    for (std::size_t q = 0; q < nq; ++q) {
        std::vector<std::size_t> order;
        order.reserve(ng);
        for (std::size_t j = 0; j < ng; ++j) {
            bool junk = policy == GalleryPolicy::cross_camera &&
                        gallery_ids[j] == query_ids[q] && gallery_cams[j] == query_cams[q];
            if (!junk) order.push_back(j);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double da = distances.at(q, a), db = distances.at(q, b);
            if (da != db) return da < db;
            return a < b; // deterministic tie-break
        });

        std::size_t hits = 0;
        double precision_sum = 0.0;
        std::size_t first_hit = max_rank; // sentinel: beyond the curve
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            if (gallery_ids[order[pos]] != query_ids[q]) continue;
            if (hits == 0) first_hit = pos;
            ++hits;
            precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
        }
        if (hits == 0) {
            ++rep.skipped_queries;
            continue;
        }
        ++scored;
        rep.per_query_ap[q] = precision_sum / static_cast<double>(hits);
        for (std::size_t k = first_hit; k < max_rank; ++k) rep.cmc[k] += 1.0;
    }

    if (scored > 0) {
        double ap_sum = 0.0;
        for (double ap : rep.per_query_ap)
            if (ap >= 0.0) ap_sum += ap;
        rep.map = ap_sum / static_cast<double>(scored);
        for (double& v : rep.cmc) v /= static_cast<double>(scored);
    }
    return rep;
}

std::vector<double> cmc_curve(const Tensor& distances, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids,
                              const std::vector<int>& query_cams,
                              const std::vector<int>& gallery_cams, std::size_t max_rank,
                              GalleryPolicy policy) {
    return evaluate_ranking(distances, query_ids, gallery_ids, query_cams, gallery_cams, max_rank,
                            policy)
        .cmc;
}

std::pair<double, std::vector<double>> mean_ap(const Tensor& distances,
                                               const std::vector<int>& query_ids,
                                               const std::vector<int>& gallery_ids,
                                               const std::vector<int>& query_cams,
                                               const std::vector<int>& gallery_cams,
                                               GalleryPolicy policy) {
    RankingReport rep = evaluate_ranking(distances, query_ids, gallery_ids, query_cams,
                                         gallery_cams, 1, policy);
    return {rep.map, rep.per_query_ap};
}

std::string ranking_report_json(const RankingReport& report, const std::string& config_echo) {
    nlohmann::json j;
    j["cmc"] = report.cmc;
    j["map"] = report.map;
    j["per_query_ap"] = report.per_query_ap;
    j["skipped_queries"] = report.skipped_queries;
    if (!config_echo.empty()) j["config"] = nlohmann::json::parse(config_echo);
    return j.dump(2) + "\n";
}

std::string per_query_ap_csv(const RankingReport& report) {
    std::string out = "query_index,ap\n";
    for (std::size_t q = 0; q < report.per_query_ap.size(); ++q) {
        out += std::to_string(q);
        out += ',';
        out += format_double(report.per_query_ap[q]);
        out += '\n';
    }
    return out;
}

} // namespace tmt
