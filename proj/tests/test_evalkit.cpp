#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tmt/errors.hpp"
#include "tmt/evalkit.hpp"
#include "tmt/rng.hpp"
#include "ref_impl.hpp"
#include "test_util.hpp"

using namespace tmt;
using testutil::random_tensor;

namespace {

// random instance generator shared by the oracle comparisons
struct Instance {
    Tensor dist;
    std::vector<int> qid, gid, qcam, gcam;
};

Instance random_instance(Rng& rng, std::size_t nq, std::size_t ng, int id_pool, int cam_pool) {
    Instance in;
    in.dist = random_tensor(rng, {nq, ng}, 0.0, 2.0);
    for (std::size_t q = 0; q < nq; ++q) {
        in.qid.push_back(static_cast<int>(rng.index(id_pool)));
        in.qcam.push_back(static_cast<int>(rng.index(cam_pool)));
    }
    for (std::size_t g = 0; g < ng; ++g) {
        in.gid.push_back(static_cast<int>(rng.index(id_pool)));
        in.gcam.push_back(static_cast<int>(rng.index(cam_pool)));
    }
    return in;
}

} // namespace

TEST_CASE("euclidean distances match a scalar loop and hit zero on duplicates") {
    Rng rng(81);
    Tensor q = random_tensor(rng, {3, 4});
    Tensor g = random_tensor(rng, {5, 4});
    for (std::size_t k = 0; k < 4; ++k) g.at(2, k) = q.at(1, k); // duplicate row

    Tensor d = pairwise_distance(q, g, DistanceMetric::euclidean);
    CHECK(d.shape() == std::vector<std::size_t>{3, 5});
    CHECK(d.at(1, 2) == 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += (q.at(i, k) - g.at(j, k)) * (q.at(i, k) - g.at(j, k));
            CHECK(d.at(i, j) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
        }

    CHECK_THROWS_AS(pairwise_distance(q, Tensor({5, 3}), DistanceMetric::euclidean),
                    DimensionError);
}

TEST_CASE("cosine distance separates orthogonal vectors and rejects zero norms") {
    Tensor q({1, 2}, {1.0, 0.0});
    Tensor g({2, 2}, {0.0, 1.0, 1.0, 0.0});
    Tensor d = pairwise_distance(q, g, DistanceMetric::cosine);
    CHECK(d.at(0, 0) == doctest::Approx(1.0));
    CHECK(d.at(0, 1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(pairwise_distance(Tensor({1, 2}), g, DistanceMetric::cosine), ContractError);
}

TEST_CASE("a first valid match at rank 2 yields cmc = 0,1,1") {
    // gallery 0 = wrong id but closest; gallery 1 = right id
    Tensor d({1, 3}, {0.1, 0.5, 0.9});
    std::vector<int> qid{7}, gid{3, 7, 4}, qcam{0}, gcam{1, 1, 1};
    std::vector<double> cmc = cmc_curve(d, qid, gid, qcam, gcam, 3);
    CHECK(cmc == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("perfect retrieval gives an all-ones curve") {
    Tensor d({2, 4}, {0.1, 0.9, 0.8, 0.7, 0.9, 0.05, 0.8, 0.7});
    std::vector<int> qid{1, 2}, gid{1, 2, 3, 4}, qcam{0, 0}, gcam{1, 1, 1, 1};
    std::vector<double> cmc = cmc_curve(d, qid, gid, qcam, gcam, 4);
    for (double v : cmc) CHECK(v == 1.0);
}

TEST_CASE("analytic average precision cases") {
    // one relevant item, ranked second -> AP 1/2
    Tensor d1({1, 3}, {0.1, 0.5, 0.9});
    std::vector<int> gid1{3, 7, 4};
    auto [map1, ap1] = mean_ap(d1, {7}, gid1, {0}, {1, 1, 1});
    CHECK(map1 == doctest::Approx(0.5));
    CHECK(ap1[0] == doctest::Approx(0.5));

    // two relevant items at ranks 1 and 2 -> AP 1
    Tensor d2({1, 3}, {0.1, 0.2, 0.9});
    std::vector<int> gid2{7, 7, 4};
    auto [map2, ap2] = mean_ap(d2, {7}, gid2, {0}, {1, 1, 1});
    CHECK(map2 == doctest::Approx(1.0));
    CHECK(ap2[0] == doctest::Approx(1.0));

    // relevant at ranks 1 and 3 -> (1/1 + 2/3)/2
    Tensor d3({1, 3}, {0.1, 0.2, 0.9});
    std::vector<int> gid3{7, 4, 7};
    auto [map3, ap3] = mean_ap(d3, {7}, gid3, {0}, {1, 1, 1});
    CHECK(map3 == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    (void)ap3;
}

TEST_CASE("same-camera entries are junk under the cross-camera policy") {
    // gallery 0: same id, same camera, distance 0 (a gift the policy must refuse)
    Tensor d({1, 3}, {0.0, 0.4, 0.2});
    std::vector<int> qid{5}, gid{5, 5, 9}, qcam{0}, gcam{0, 1, 1};

    RankingReport cross = evaluate_ranking(d, qid, gid, qcam, gcam, 2);
    // valid list: gallery 1 (d=.4, id 5), gallery 2 (d=.2, id 9) -> hit at rank 2
    CHECK(cross.cmc[0] == 0.0);
    CHECK(cross.cmc[1] == 1.0);
    CHECK(cross.per_query_ap[0] == doctest::Approx(0.5));

    RankingReport single =
        evaluate_ranking(d, qid, gid, qcam, gcam, 2, GalleryPolicy::single_gallery);
    CHECK(single.cmc[0] == 1.0); // the distance-0 twin now counts
}

TEST_CASE("queries without any valid match are skipped and counted") {
    Tensor d({2, 2}, {0.1, 0.2, 0.3, 0.4});
    std::vector<int> qid{1, 99}, gid{1, 2}, qcam{0, 0}, gcam{1, 1};
    RankingReport rep = evaluate_ranking(d, qid, gid, qcam, gcam, 2);
    CHECK(rep.skipped_queries == 1);
    CHECK(rep.per_query_ap[1] == -1.0);
    CHECK(rep.per_query_ap[0] == doctest::Approx(1.0));
    CHECK(rep.map == doctest::Approx(1.0)); // mean over scored queries only
    CHECK(rep.cmc[0] == 1.0);               // denominator excludes the skipped query
}

TEST_CASE("ranking depends only on distance order") {
    Rng rng(82);
    Instance in = random_instance(rng, 5, 9, 4, 2);
    RankingReport base = evaluate_ranking(in.dist, in.qid, in.gid, in.qcam, in.gcam, 9);

    Tensor warped = in.dist; // strictly monotone: d -> d^3 + 2d + 1 on d >= 0
    for (std::size_t i = 0; i < warped.numel(); ++i) {
        double v = warped[i];
        warped[i] = v * v * v + 2.0 * v + 1.0;
    }
    RankingReport same = evaluate_ranking(warped, in.qid, in.gid, in.qcam, in.gcam, 9);
    CHECK(same.map == base.map);
    CHECK(same.cmc == base.cmc);
    CHECK(same.per_query_ap == base.per_query_ap);
}

TEST_CASE("exact ties resolve toward the lower gallery index") {
    Tensor d({1, 2}, {0.5, 0.5});
    std::vector<int> qcam{0}, gcam{1, 1};
    // relevant item first: counted at rank 1
    CHECK(cmc_curve(d, {1}, {1, 2}, qcam, gcam, 2)[0] == 1.0);
    // relevant item second: the tie is lost to index 0
    std::vector<double> cmc = cmc_curve(d, {1}, {2, 1}, qcam, gcam, 2);
    CHECK(cmc[0] == 0.0);
    CHECK(cmc[1] == 1.0);
}

TEST_CASE("curves are monotone and saturate when every query can match") {
    Rng rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t nq = 1 + rng.index(6), ng = 4 + rng.index(7);
        Instance in = random_instance(rng, nq, ng, 3, 2);
        // force validity: make gallery 0 share each query's id on another camera
        for (std::size_t q = 0; q < nq; ++q) {
            in.gid[q % ng] = in.qid[q];
            in.gcam[q % ng] = 1 - in.qcam[q];
        }
        RankingReport rep = evaluate_ranking(in.dist, in.qid, in.gid, in.qcam, in.gcam, ng);
        for (std::size_t k = 1; k < rep.cmc.size(); ++k) CHECK(rep.cmc[k] >= rep.cmc[k - 1]);
        for (double v : rep.cmc) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        if (rep.skipped_queries == 0) CHECK(rep.cmc.back() == 1.0);
    }
}

TEST_CASE("evaluation matches the brute-force oracle on random instances") {
    Rng rng(84);
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t nq = 1 + rng.index(6), ng = 1 + rng.index(10);
        Instance in = random_instance(rng, nq, ng, 3, 2);
        bool cross = rng.index(2) == 0;
        GalleryPolicy policy =
            cross ? GalleryPolicy::cross_camera : GalleryPolicy::single_gallery;

        RankingReport got =
            evaluate_ranking(in.dist, in.qid, in.gid, in.qcam, in.gcam, ng, policy);
        refimpl::RefRanking want =
            refimpl::ref_ranking(in.dist, in.qid, in.gid, in.qcam, in.gcam, ng, cross);

        CHECK(got.skipped_queries == want.skipped);
        CHECK(got.map == doctest::Approx(want.map).epsilon(1e-14));
        REQUIRE(got.cmc.size() == want.cmc.size());
        for (std::size_t k = 0; k < want.cmc.size(); ++k)
            CHECK(got.cmc[k] == doctest::Approx(want.cmc[k]).epsilon(1e-14));
        for (std::size_t q = 0; q < nq; ++q)
            CHECK(got.per_query_ap[q] == doctest::Approx(want.ap[q]).epsilon(1e-14));
    }
}

TEST_CASE("reports serialize with every field present") {
    Tensor d({1, 2}, {0.1, 0.2});
    RankingReport rep = evaluate_ranking(d, {1}, {1, 2}, {0}, {1, 1}, 2);
    std::string js = ranking_report_json(rep, "{\"seed\": 7}");
    CHECK(js.find("\"cmc\"") != std::string::npos);
    CHECK(js.find("\"map\"") != std::string::npos);
    CHECK(js.find("\"skipped_queries\"") != std::string::npos);
    CHECK(js.find("\"seed\": 7") != std::string::npos);

    std::string csv = per_query_ap_csv(rep);
    CHECK(csv == "query_index,ap\n0,1\n");
}
