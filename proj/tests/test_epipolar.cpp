#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Core>
#include <algorithm>
#include <random>
#include <vector>

#include "epigraph/epipolar.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace epigraph;
using testutil::make_view;
using testutil::random_rig;
using testutil::random_rig_point;

namespace {

CameraView identity_view(std::string id, const Eigen::Vector3d& translation) {
    CameraView view;
    view.id = std::move(id);
    view.intrinsics = {1.0, 1.0, 0.0, 0.0, 0.0};
    view.pose.rotation = Eigen::Matrix3d::Identity();
    view.pose.translation = translation;
    view.width = 4;  // generous virtual bounds for unit-focal fixtures
    view.height = 4;
    return view;
}

Correspondence project_pair(const CameraView& v1, const CameraView& v2, const Eigen::Vector3d& x) {
    Correspondence c;
    c.view_a = v1.id;
    c.view_b = v2.id;
    c.x1 = v1.project(x);
    c.x2 = v2.project(x);
    return c;
}

}  // namespace

TEST_CASE("fundamental matrix of a pure-translation rig is [t]x up to scale") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    Eigen::Matrix3d f = fundamental_matrix(v1, v2);

    Eigen::Matrix3d expected;
    expected << 0, 0, 0,
                0, 0, -1,
                0, 1, 0;
    // Fix the free scale by matching the (1,2) entry.
    f *= expected(1, 2) / f(1, 2);
    CHECK((f - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exact projection pairs satisfy the epipolar constraint") {
    std::mt19937_64 rng(7001);
    const Eigen::Vector3d x(0.3, -0.2, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rig = random_rig(rng);
        if (rig.view1.to_camera(x).z() <= 0.0 || rig.view2.to_camera(x).z() <= 0.0) continue;
        const Eigen::Matrix3d f = fundamental_matrix(rig.view1, rig.view2);
        const auto res = epipolar_residuals(f, project_pair(rig.view1, rig.view2, x));
        CHECK(std::abs(res.algebraic) < 1e-9);
    }
}

TEST_CASE("constructed fundamental matrices are rank 2") {
    std::mt19937_64 rng(7002);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rig = random_rig(rng);
        const Eigen::Matrix3d f = fundamental_matrix(rig.view1, rig.view2);
        const Eigen::Vector3d sigma = oracle::singular_values(f);
        CHECK(sigma(2) / sigma(0) < 1e-12);
    }
}

TEST_CASE("fundamental matrix rejects degenerate and invalid cameras") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    CHECK_THROWS_MATCHES(fundamental_matrix(v1, v1), Error, Catch::Matchers::Predicate<Error>([](
        const Error& e) { return e.code() == ErrorCode::degenerate_pair; }));

    CameraView bad = identity_view("c", {1.0, 0.0, 0.0});
    bad.intrinsics.fx = 0.0;
    CHECK_THROWS_MATCHES(fundamental_matrix(v1, bad), Error, Catch::Matchers::Predicate<Error>([](
        const Error& e) { return e.code() == ErrorCode::invalid_camera; }));
}

TEST_CASE("Sampson residual: perpendicular and parallel perturbations") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    const Eigen::Matrix3d f = fundamental_matrix(v1, v2);

    const Eigen::Vector3d x(0.3, -0.2, 5.0);
    Correspondence exact = project_pair(v1, v2, x);
    const auto clean = epipolar_residuals(f, exact);
    CHECK(std::abs(clean.algebraic) < 1e-9);
    CHECK(clean.sampson < 1e-9);

    // The epipolar line for this rectified rig is horizontal, so perpendicular
    // displacement is vertical. Closed form: sampson = dy^2 / 2.
    Correspondence off_line = exact;
    off_line.x2.y() += 1.0;
    CHECK(epipolar_residuals(f, off_line).sampson == Catch::Approx(0.5).margin(1e-12));

    Correspondence along_line = exact;
    along_line.x2.x() += 0.37;
    CHECK(std::abs(epipolar_residuals(f, along_line).algebraic) < 1e-9);
}

TEST_CASE("Sampson residual is invariant to the scale of F") {
    std::mt19937_64 rng(7003);
    const auto rig = random_rig(rng);
    const Eigen::Matrix3d f = fundamental_matrix(rig.view1, rig.view2);
    const Eigen::Vector3d x = random_rig_point(rng, rig);
    Correspondence c = project_pair(rig.view1, rig.view2, x);
    c.x2 += Eigen::Vector2d(3.0, -2.0);

    const double base = epipolar_residuals(f, c).sampson;
    for (double scale : {2.0, -3.0, 1e-6, 4096.0}) {
        const double scaled = epipolar_residuals(scale * f, c).sampson;
        CHECK(std::abs(scaled - base) <= 1e-12 * std::max(1.0, base));
    }
}

TEST_CASE("Sampson residual flags a fully degenerate denominator") {
    Eigen::Matrix3d f = Eigen::Matrix3d::Zero();
    f(2, 2) = 1.0;
    Correspondence c;
    c.x1 = {0.0, 0.0};
    c.x2 = {0.0, 0.0};
    const auto res = epipolar_residuals(f, c);
    CHECK(res.degenerate);
    CHECK(std::isinf(res.sampson));
}

TEST_CASE("DLT recovers a point from exact two-view projections") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    const Eigen::Vector3d x_true(0.0, 0.0, 5.0);

    const std::vector<CameraView> views{v1, v2};
    const std::vector<Eigen::Vector2d> pixels{v1.project(x_true), v2.project(x_true)};
    const Eigen::Vector3d x = triangulate_dlt(views, pixels);
    CHECK((x - x_true).norm() < 1e-9);
}

TEST_CASE("DLT is invariant to view order for three exact views") {
    std::mt19937_64 rng(7004);
    const auto rig = random_rig(rng);
    const CameraView v3 = make_view("cam3", 700.0, 1280, 960,
                                    testutil::look_at({0.0, 5.0, 1.0}, Eigen::Vector3d::Zero()));
    const Eigen::Vector3d x_true = random_rig_point(rng, rig);
    REQUIRE(v3.to_camera(x_true).z() > 0.0);

    std::vector<CameraView> views{rig.view1, rig.view2, v3};
    std::vector<Eigen::Vector2d> pixels;
    for (const auto& view : views) pixels.push_back(view.project(x_true));

    const Eigen::Vector3d base = triangulate_dlt(views, pixels);
    std::vector<int> order{0, 1, 2};
    do {
        std::vector<CameraView> permuted_views;
        std::vector<Eigen::Vector2d> permuted_pixels;
        for (int idx : order) {
            permuted_views.push_back(views[idx]);
            permuted_pixels.push_back(pixels[idx]);
        }
        const Eigen::Vector3d x = triangulate_dlt(permuted_views, permuted_pixels);
        CHECK((x - base).norm() < 1e-9);
    } while (std::next_permutation(order.begin(), order.end()));
}

TEST_CASE("DLT rejects identical cameras and points at infinity") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const std::vector<CameraView> same{v1, v1};
    const std::vector<Eigen::Vector2d> pixels{{0.1, 0.2}, {0.3, 0.2}};
    CHECK_THROWS_MATCHES(triangulate_dlt(same, pixels), Error, Catch::Matchers::Predicate<Error>([](
        const Error& e) { return e.code() == ErrorCode::degenerate_geometry; }));

    // Zero disparity under pure translation puts the point at infinity.
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    const std::vector<CameraView> translated{v1, v2};
    const std::vector<Eigen::Vector2d> equal_pixels{{0.3, 0.2}, {0.3, 0.2}};
    CHECK_THROWS_MATCHES(triangulate_dlt(translated, equal_pixels), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == ErrorCode::at_infinity; }));
}

TEST_CASE("refinement reaches machine-zero residuals on exact pixels") {
    std::mt19937_64 rng(7005);
    const auto rig = random_rig(rng);
    const Eigen::Vector3d x_true = random_rig_point(rng, rig);
    const std::vector<CameraView> views{rig.view1, rig.view2};
    const std::vector<Eigen::Vector2d> pixels{rig.view1.project(x_true), rig.view2.project(x_true)};

    const Eigen::Vector3d x0 = triangulate_dlt(views, pixels);
    const TriangulatedPoint refined = refine_reprojection(x0, views, pixels);
    CHECK(refined.reprojection_rmse < 1e-9);
    CHECK((refined.position - x_true).norm() < 1e-8);
}

TEST_CASE("refinement strictly decreases the objective from a displaced start") {
    std::mt19937_64 rng(7006);
    const auto rig = random_rig(rng);
    const Eigen::Vector3d x_true = random_rig_point(rng, rig);
    const std::vector<CameraView> views{rig.view1, rig.view2};
    const std::vector<Eigen::Vector2d> pixels{rig.view1.project(x_true), rig.view2.project(x_true)};

    const Eigen::Vector3d x0 = x_true + Eigen::Vector3d(0.1, 0.0, 0.0).normalized() * 0.1;
    RefineTrace trace;
    refine_reprojection(x0, views, pixels, {}, &trace);
    REQUIRE(trace.objectives.size() >= 2);
    CHECK(trace.objectives.back() < trace.objectives.front());
    for (std::size_t i = 1; i < trace.objectives.size(); ++i) {
        CHECK(trace.objectives[i] <= trace.objectives[i - 1]);
    }
}

TEST_CASE("refinement objective is non-increasing across many noisy instances") {
    std::mt19937_64 rng(7007);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rig = random_rig(rng);
        const Eigen::Vector3d x_true = random_rig_point(rng, rig);
        const std::vector<CameraView> views{rig.view1, rig.view2};
        std::vector<Eigen::Vector2d> pixels{rig.view1.project(x_true), rig.view2.project(x_true)};
        for (auto& p : pixels) {
            p.x() += testutil::gaussian(rng, 0.0, 0.5);
            p.y() += testutil::gaussian(rng, 0.0, 0.5);
        }
        RefineTrace trace;
        refine_reprojection(triangulate_dlt(views, pixels), views, pixels, {}, &trace);
        for (std::size_t i = 1; i < trace.objectives.size(); ++i) {
            CHECK(trace.objectives[i] <= trace.objectives[i - 1]);
        }
    }
}

TEST_CASE("noisy refinement tracks the grid-search oracle") {
    std::mt19937_64 rng(7008);
    const CameraView v1 = make_view("a", 800.0, 1280, 960,
                                    testutil::look_at({0.0, 0.0, -5.0}, Eigen::Vector3d::Zero()));
    const CameraView v2 = make_view("b", 800.0, 1280, 960,
                                    testutil::look_at({1.0, 0.0, -5.0}, Eigen::Vector3d::Zero()));
    const std::vector<CameraView> views{v1, v2};

    double gn_error_sum = 0.0;
    double oracle_error_sum = 0.0;
    const int points = 100;
    for (int trial = 0; trial < points; ++trial) {
        const Eigen::Vector3d x_true(testutil::uniform(rng, -0.8, 0.8),
                                     testutil::uniform(rng, -0.8, 0.8),
                                     testutil::uniform(rng, -0.8, 0.8));
        std::vector<Eigen::Vector2d> pixels{v1.project(x_true), v2.project(x_true)};
        for (auto& p : pixels) {
            p.x() += testutil::gaussian(rng, 0.0, 0.5);
            p.y() += testutil::gaussian(rng, 0.0, 0.5);
        }
        const TriangulatedPoint refined =
            refine_reprojection(triangulate_dlt(views, pixels), views, pixels);
        gn_error_sum += (refined.position - x_true).norm();

        const Eigen::Vector3d oracle_best =
            oracle::grid_search_minimum(views, {pixels[0], pixels[1]}, x_true, 0.1);
        oracle_error_sum += (oracle_best - x_true).norm();
    }
    CHECK(gn_error_sum / points < 5.0 * (oracle_error_sum / points));
}

TEST_CASE("reprojection gradient matches central differences") {
    std::mt19937_64 rng(7009);
    const auto rig = random_rig(rng);
    const Eigen::Vector3d x_true = random_rig_point(rng, rig);
    const std::vector<CameraView> views{rig.view1, rig.view2};
    const std::vector<Eigen::Vector2d> pixels{rig.view1.project(x_true), rig.view2.project(x_true)};

    // Evaluate at a displaced point so residuals (and the gradient) are nonzero.
    const Eigen::Vector3d x = x_true + Eigen::Vector3d(0.02, -0.015, 0.03);

    // Analytic gradient of the objective: 2 J^T r, assembled like the solver does.
    Eigen::Vector3d analytic = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < views.size(); ++i) {
        const Eigen::Matrix<double, 3, 4> p = views[i].projection_matrix();
        const Eigen::Vector3d h = p.leftCols<3>() * x + p.col(3);
        const double u = h.x() / h.z();
        const double v = h.y() / h.z();
        const Eigen::RowVector3d du = (p.row(0).head<3>() - u * p.row(2).head<3>()) / h.z();
        const Eigen::RowVector3d dv = (p.row(1).head<3>() - v * p.row(2).head<3>()) / h.z();
        analytic += 2.0 * (u - pixels[i].x()) * du.transpose();
        analytic += 2.0 * (v - pixels[i].y()) * dv.transpose();
    }

    const double step = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector3d plus = x, minus = x;
        plus(axis) += step;
        minus(axis) -= step;
        const double fd = (reprojection_objective(plus, views, pixels) -
                           reprojection_objective(minus, views, pixels)) /
                          (2.0 * step);
        CHECK(std::abs(fd - analytic(axis)) <
              1e-5 * std::max({1.0, std::abs(fd), std::abs(analytic(axis))}));
    }
}

TEST_CASE("refinement reports a numerical failure from a depth-zero start") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    const std::vector<CameraView> views{v1, v2};
    const std::vector<Eigen::Vector2d> pixels{{0.0, 0.0}, {0.2, 0.0}};

    const Eigen::Vector3d bad_start(0.0, 0.0, 0.0);  // on the first camera plane
    try {
        refine_reprojection(bad_start, views, pixels);
        FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
        CHECK(e.last_finite_iterate() == bad_start);
    }
}

TEST_CASE("build_point_cloud keeps exact correspondences as inliers in input order") {
    std::mt19937_64 rng(7010);
    const auto rig = random_rig(rng);
    std::vector<Correspondence> correspondences;
    std::vector<Eigen::Vector3d> truth;
    for (int i = 0; i < 50; ++i) {
        const Eigen::Vector3d x = random_rig_point(rng, rig);
        truth.push_back(x);
        correspondences.push_back(project_pair(rig.view1, rig.view2, x));
    }

    const std::vector<CameraView> views{rig.view1, rig.view2};
    const auto cloud = build_point_cloud(correspondences, views, 2.0);
    REQUIRE(cloud.size() == 50);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(cloud[i].inlier);
        CHECK((cloud[i].position - truth[i]).norm() < 1e-8);
        CHECK(cloud[i].source.x1 == correspondences[i].x1);
    }
}

TEST_CASE("build_point_cloud flags off-epipolar-line perturbations") {
    std::mt19937_64 rng(7011);
    const auto rig = random_rig(rng);
    const Eigen::Matrix3d f = fundamental_matrix(rig.view1, rig.view2);

    const Eigen::Vector3d x = random_rig_point(rng, rig);
    Correspondence good = project_pair(rig.view1, rig.view2, x);
    Correspondence bad = good;
    // Push x2 by 10 px along the epipolar line normal (the line's (a, b) part).
    const Eigen::Vector3d line = f * Eigen::Vector3d(bad.x1.x(), bad.x1.y(), 1.0);
    const Eigen::Vector2d normal = Eigen::Vector2d(line.x(), line.y()).normalized();
    bad.x2 += 10.0 * normal;
    REQUIRE(rig.view2.contains(bad.x2));

    // Closed-form check that the planted Sampson residual clears the threshold.
    REQUIRE(epipolar_residuals(f, bad).sampson > 2.0);

    const std::vector<CameraView> views{rig.view1, rig.view2};
    const auto cloud = build_point_cloud(std::vector<Correspondence>{good, bad}, views, 2.0);
    REQUIRE(cloud.size() == 2);
    CHECK(cloud[0].inlier);
    CHECK_FALSE(cloud[1].inlier);
}

TEST_CASE("build_point_cloud rejects points behind a camera") {
    // Cameras at the origin plane looking along +z; the world point sits behind
    // both, yet its projections are epipolar-consistent.
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-0.5, 0.0, 0.0});
    const Eigen::Vector3d behind(0.2, 0.1, -5.0);

    Correspondence c = project_pair(v1, v2, behind);
    REQUIRE(v1.contains(c.x1));
    REQUIRE(v2.contains(c.x2));

    const std::vector<CameraView> views{v1, v2};
    const auto cloud = build_point_cloud(std::vector<Correspondence>{c}, views, 2.0);
    REQUIRE(cloud.size() == 1);
    CHECK(cloud[0].sampson_residual < 2.0);
    CHECK_FALSE(cloud[0].inlier);
}

TEST_CASE("build_point_cloud reports unknown views and accepts empty input") {
    const CameraView v1 = identity_view("a", {0.0, 0.0, 0.0});
    const CameraView v2 = identity_view("b", {-1.0, 0.0, 0.0});
    const std::vector<CameraView> views{v1, v2};

    Correspondence dangling;
    dangling.view_a = "a";
    dangling.view_b = "99";
    dangling.x1 = {0.1, 0.1};
    dangling.x2 = {0.1, 0.1};
    try {
        build_point_cloud(std::vector<Correspondence>{dangling}, views, 2.0);
        FAIL("expected unknown-view error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unknown_view);
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }

    CHECK(build_point_cloud(std::vector<Correspondence>{}, views, 2.0).empty());
}
