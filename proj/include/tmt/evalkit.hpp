#pragma once

#include <string>
#include <vector>

#include "tmt/tensor.hpp"

namespace tmt {

enum class DistanceMetric { euclidean, cosine };

// Gallery filtering per query: cross_camera removes same-identity
// same-camera entries (multi-shot protocol); single_gallery keeps everything
// (single-match protocol, CMC-oriented).
enum class GalleryPolicy { cross_camera, single_gallery };

// queries [Nq x D], gallery [Ng x D] -> [Nq x Ng]. Cosine distance is
// 1 - cosine similarity and rejects zero-norm rows.
Tensor pairwise_distance(const Tensor& queries, const Tensor& gallery, DistanceMetric metric);

struct RankingReport {
    std::vector<double> cmc;          // hit rate within rank K+1, length max_rank
    double map = 0.0;                 // mean of per_query_ap over scored queries
    std::vector<double> per_query_ap; // -1 marks a query with no valid match
    std::size_t skipped_queries = 0;
};

// Ranks ascend by (distance, gallery index); the index tie-break keeps
// results deterministic. Queries with no valid same-identity gallery entry
// are skipped and counted.
RankingReport evaluate_ranking(const Tensor& distances, const std::vector<int>& query_ids,
                               const std::vector<int>& gallery_ids,
                               const std::vector<int>& query_cams,
                               const std::vector<int>& gallery_cams, std::size_t max_rank,
                               GalleryPolicy policy = GalleryPolicy::cross_camera);

std::vector<double> cmc_curve(const Tensor& distances, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids,
                              const std::vector<int>& query_cams,
                              const std::vector<int>& gallery_cams, std::size_t max_rank,
                              GalleryPolicy policy = GalleryPolicy::cross_camera);

// (map, per-query AP with -1 for skipped)
std::pair<double, std::vector<double>> mean_ap(const Tensor& distances,
                                               const std::vector<int>& query_ids,
                                               const std::vector<int>& gallery_ids,
                                               const std::vector<int>& query_cams,
                                               const std::vector<int>& gallery_cams,
                                               GalleryPolicy policy = GalleryPolicy::cross_camera);

// structured-text emission; config_echo is inlined verbatim as the "config"
// field when nonempty (must be valid JSON)
std::string ranking_report_json(const RankingReport& report, const std::string& config_echo = "");
std::string per_query_ap_csv(const RankingReport& report);

} // namespace tmt
