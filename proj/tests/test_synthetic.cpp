#include "massnet/errors.hpp"
#include "massnet/evaluation.hpp"
#include "massnet/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace massnet;
using namespace massnet::synth;

TEST_CASE("rendered mass equals body weight") {
    const GridSpec grid;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> w(40, 105), h(1.45, 1.92);
    for (int k = 0; k < 40; ++k) {
        const Posture p = static_cast<Posture>(k % 4);
        const BodyModel body = make_body(w(rng), h(rng), p, grid, draw_jitter(rng));
        const PressureFrame f = render_body(body, grid);
        CHECK(std::abs(f.sum() - body.weight_kg) < 1e-9);
        CHECK(body.joints.count() == kDefaultJointCount);
        CHECK(body.segments.size() == 7);
        f.validate();
        CHECK(std::abs(render_body(body, grid, 0.8).sum() - 0.8 * body.weight_kg) < 1e-9);
    }
}

TEST_CASE("postures share the mass but not the layout") {
    const GridSpec grid;
    const PressureFrame supine = render_body(make_body(70, 1.7, Posture::supine, grid), grid);
    const PressureFrame left = render_body(make_body(70, 1.7, Posture::left_side, grid), grid);
    CHECK(std::abs(supine.sum() - left.sum()) < 1e-9);
    CHECK_FALSE(supine == left);
    const BodyModel s = make_body(70, 1.7, Posture::supine, grid);
    const BodyModel l = make_body(70, 1.7, Posture::left_side, grid);
    CHECK(std::abs(blend_bodies(s, l, 0.0).segments[1].center_col - s.segments[1].center_col) < 1e-12);
    CHECK(std::abs(blend_bodies(s, l, 1.0).segments[1].center_col - l.segments[1].center_col) < 1e-12);
}

TEST_CASE("generation is deterministic per seed") {
    SyntheticConfig cfg;
    cfg.n_samples = 12;
    cfg.saturation_quantile = 0.7;
    cfg.noise_rel = 0.02;
    cfg.gain_sigma = 0.05;
    cfg.seed = 4;
    const auto a = synthesize_dataset(cfg);
    const auto b = synthesize_dataset(cfg);
    REQUIRE(a.dataset.size() == 12);
    for (std::size_t i = 0; i < a.dataset.size(); ++i) {
        CHECK(a.dataset[i].frame == b.dataset[i].frame);
        CHECK(a.dataset[i].weight_kg == b.dataset[i].weight_kg);
    }
    cfg.seed = 5;
    const auto c = synthesize_dataset(cfg);
    CHECK_FALSE(a.dataset[0].frame == c.dataset[0].frame);
    for (const auto& s : a.dataset.samples()) {
        CHECK(s.weight_kg >= 40.0);
        CHECK(s.weight_kg <= 105.0);
    }
}

TEST_CASE("sensor model") {
    const GridSpec grid{8, 6};
    PressureFrame f(8, 6);
    for (int i = 0; i < 48; ++i) f.values()[static_cast<std::size_t>(i)] = 0.1 * i;
    std::mt19937_64 rng(1);

    SUBCASE("ideal sensor is the identity") {
        const SensorModel ideal = make_sensor_model(grid, 0.0, std::nullopt, 0.0, 0.0, rng);
        CHECK(apply_sensor_model(f, ideal, rng) == f);
    }
    SUBCASE("a cap below the peak strictly lowers the sum") {
        const SensorModel capped = make_sensor_model(grid, 0.0, 2.0, 0.0, 0.0, rng);
        const PressureFrame out = apply_sensor_model(f, capped, rng);
        CHECK(out.sum() < f.sum());
        CHECK(out.max() == 2.0);
    }
    SUBCASE("noise never drives a cell negative") {
        const SensorModel noisy = make_sensor_model(grid, 0.0, std::nullopt, 3.0, 0.0, rng);
        apply_sensor_model(f, noisy, rng).validate();
    }
    SUBCASE("hysteresis low-pass") {
        const SensorModel lag = make_sensor_model(grid, 0.0, std::nullopt, 0.0, 0.5, rng);
        const std::vector<PressureFrame> step{PressureFrame(8, 6, 0.0), PressureFrame(8, 6, 1.0),
                                              PressureFrame(8, 6, 1.0), PressureFrame(8, 6, 1.0)};
        const auto out = apply_sensor_model(step, lag, rng);
        const double expected[] = {0.0, 0.5, 0.75, 0.875};
        for (int t = 0; t < 4; ++t) CHECK(out[static_cast<std::size_t>(t)].at(3, 3) == doctest::Approx(expected[t]));
    }
    SUBCASE("invalid parameters") {
        CHECK_THROWS_AS(make_sensor_model(grid, 0.0, 0.0, 0.0, 0.0, rng), GenerationError);
        CHECK_THROWS_AS(make_sensor_model(grid, 0.0, std::nullopt, -1.0, 0.0, rng), GenerationError);
        CHECK_THROWS_AS(make_sensor_model(grid, 0.0, std::nullopt, 0.0, 1.0, rng), GenerationError);
        const SensorModel wrong = make_sensor_model(GridSpec{4, 4}, 0.1, std::nullopt, 0.0, 0.0, rng);
        CHECK_THROWS_AS(apply_sensor_model(f, wrong, rng), GenerationError);
    }
}

TEST_CASE("summation baseline on ideal and saturated sensors") {
    SyntheticConfig cfg;
    cfg.n_samples = 150;
    cfg.seed = 8;
    const Dataset ideal = synthesize_dataset(cfg).dataset;
    const auto fit = eval::linear_fit_baseline(ideal);
    double worst = 0.0;
    for (const auto& s : ideal.samples()) worst = std::max(worst, std::abs(fit.predict(s.frame) - s.weight_kg));
    CHECK(worst < 1e-6);
    CHECK(fit.a == doctest::Approx(1.0));

    double prev = 0.0;
    for (double q : {0.95, 0.85, 0.7}) {
        cfg.saturation_quantile = q;
        const Dataset sat = synthesize_dataset(cfg).dataset;
        eval::LinearRegressor lin(eval::linear_fit_baseline(sat));
        const double mae = eval::evaluate_report(lin, sat).mae_mean;
        CHECK(mae > prev);
        prev = mae;
    }
    CHECK(prev > 1.0);
}

TEST_CASE("blobs must land on the grid") {
    const GridSpec grid;
    BodyModel body = make_body(70, 1.7, Posture::supine, grid);
    body.segments[0].center_row = -30.0;
    CHECK_THROWS_AS(render_body(body, grid), GenerationError);
    body = make_body(70, 1.7, Posture::supine, grid);
    body.segments[2].mass_fraction += 0.1;
    CHECK_THROWS_AS(render_body(body, grid), GenerationError);
    CHECK_THROWS_AS(make_body(-1, 1.7, Posture::supine, grid), GenerationError);
    SyntheticConfig cfg;
    cfg.postures.clear();
    CHECK_THROWS_AS(synthesize_dataset(cfg), GenerationError);
}

TEST_CASE("sessions carry planted movements") {
    SessionConfig cfg;
    cfg.n_frames = 400;
    cfg.n_movements = 4;
    cfg.movement_frames = 20;
    const SyntheticSession s = synthesize_session(cfg);
    CHECK(s.frames.size() == 400);
    CHECK(s.movements.size() == 4);
    int active = 0;
    for (auto [a, b] : s.movements) {
        CHECK(b - a == 20);
        for (int t = a; t < b; ++t) CHECK(s.postures[static_cast<std::size_t>(t)] == Posture::other);
        active += b - a;
    }
    CHECK(active == 80);
    const Dataset d = s.to_dataset();
    CHECK(d.format() == FormatId::massnet_dynamic);
    CHECK(d[399].timestamp == 399);
    cfg.n_movements = 20;
    CHECK_THROWS_AS(synthesize_session(cfg), GenerationError);
}
