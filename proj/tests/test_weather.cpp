#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "test_util.hpp"
#include "unimix/weather.hpp"

using namespace unimix;

namespace {

// A clear-air hard target occupying ranges [0, w] in the shifted response
// frame, attenuated two-way along the path. The received-power ratio
// between two target ranges must equal the Beer-Lambert factor.
PulseModel attenuated_target(double total_range, double alpha, double width) {
    PulseModel m = PulseModel::rectangular(1.0, 2.0 * total_range + 1.0);
    m.response = [total_range, alpha, width](double x) {
        if (x < 0.0 || x > width) return 0.0;
        return std::exp(-2.0 * alpha * (total_range - x));
    };
    m.response_breakpoints = {0.0, width};
    return m;
}

}  // namespace

TEST_CASE("received_power constant integrand over pulse support") {
    // C_A=1, P_T=1 on [0, 0.5], H=1, c=1, R=1: integral = pulse duration
    PulseModel m = PulseModel::rectangular(1.0, 0.5);
    CHECK(received_power(m, 1.0, 1000) == Catch::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("received_power linear response matches the closed form") {
    // P_T=1 on [0,2], H(x)=x, c=1, R=1: integral of (1 - t/2) over [0,2] = 1
    PulseModel m = PulseModel::rectangular(1.0, 2.0);
    m.response = [](double x) { return x; };
    double numeric = received_power(m, 1.0, 10000);
    CHECK(numeric == Catch::Approx(1.0).epsilon(1e-9));

    // doubling steps at least halves the (here already tiny) error
    double e1 = std::abs(received_power(m, 1.0, 2000) - 1.0);
    double e2 = std::abs(received_power(m, 1.0, 4000) - 1.0);
    CHECK(e2 <= e1 / 2.0 + 1e-11);
}

TEST_CASE("received_power converges at second order on a curved response") {
    // H(x) = x^2 has a genuinely nonzero trapezoidal error
    PulseModel m = PulseModel::rectangular(1.0, 2.0);
    m.response = [](double x) { return x * x; };
    // integral of (1 - t/2)^2 over [0,2] = 2/3
    const double exact = 2.0 / 3.0;
    double e1 = std::abs(received_power(m, 1.0, 500) - exact);
    double e2 = std::abs(received_power(m, 1.0, 1000) - exact);
    REQUIRE(e1 > 0.0);
    double order = std::log2(e1 / e2);
    CHECK(order >= 1.9);

    // at 10^4 steps any polynomial response sits within 1e-6 relative
    CHECK(std::abs(received_power(m, 1.0, 10000) - exact) / exact < 1e-6);
}

TEST_CASE("received_power handles the pulse discontinuity inside the window") {
    // pulse shorter than the sweep: jump at tau must not degrade accuracy
    PulseModel m = PulseModel::rectangular(3.0, 0.73);
    m.response = [](double x) { return 1.0 + 0.5 * x; };
    // integral over [0, 0.73] of 3*(1 + 0.5*(2 - t/2)) dt
    // = 3*[2t - t^2/8] at 0.73 = 3*(1.46 - 0.0666125)
    const double exact = 3.0 * (2.0 * 0.73 - 0.73 * 0.73 / 8.0);
    CHECK(received_power(m, 2.0, 10000) == Catch::Approx(exact).epsilon(1e-9));
}

TEST_CASE("received_power input validation") {
    PulseModel m = PulseModel::rectangular(1.0, 0.5);
    CHECK_THROWS_AS(received_power(m, 0.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(received_power(m, -1.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(received_power(m, 1.0, 1), std::invalid_argument);
}

TEST_CASE("integrator validates the Beer-Lambert closed form") {
    // the numeric power ratio between two target ranges equals
    // exp(-2 alpha (R1 - R2)), the factor the fog simulator applies
    const double alpha = 0.08, width = 0.05;
    double p10 = received_power(attenuated_target(10.0, alpha, width), 10.0, 20000);
    double p25 = received_power(attenuated_target(25.0, alpha, width), 25.0, 20000);
    double ratio = p25 / p10;
    CHECK(ratio == Catch::Approx(std::exp(-2.0 * alpha * 15.0)).epsilon(1e-4));
}

namespace {

WeatherParams fog_params(double alpha, WeatherKind kind = WeatherKind::dense_fog) {
    WeatherParams p;
    p.kind = kind;
    p.alpha = alpha;
    return p;
}

}  // namespace

TEST_CASE("simulate_fog with alpha 0 is bit-identical to the input") {
    Rng rng(31);
    PointCloud cloud = test_util::random_cloud(rng, 400);
    LabelArray labels = test_util::random_labels(rng, 400, 6, 0);
    Rng sim_rng(7);
    BridgeSample out = simulate_fog(cloud, labels, fog_params(0.0), sim_rng);
    CHECK(out.cloud == cloud);
    CHECK(out.labels == labels);
    for (Provenance p : out.provenance) CHECK(p == Provenance::unchanged);
}

TEST_CASE("simulate_fog attenuation is monotone in alpha") {
    Rng rng(32);
    PointCloud cloud = test_util::random_cloud(rng, 4000, 18.0);
    LabelArray labels = test_util::random_labels(rng, 4000, 6, 0);

    double prev_mean = 2.0;
    double prev_perturbed = -1.0;
    for (double alpha : {0.01, 0.06, 0.12}) {
        Rng sim_rng(99);  // same stream for every alpha
        BridgeSample out = simulate_fog(cloud, labels, fog_params(alpha), sim_rng);
        double sum = 0.0;
        std::size_t hard = 0;
        for (std::size_t i = 0; i < out.cloud.size(); ++i) {
            if (out.provenance[i] != Provenance::scattered) {
                sum += out.cloud.points[i].intensity;
                ++hard;
            }
        }
        REQUIRE(hard > 0);
        double mean = sum / hard;
        CHECK(mean < prev_mean);
        prev_mean = mean;

        // changed-in-place plus removed: N minus the untouched survivors
        double perturbed = static_cast<double>(
            cloud.size() - std::count(out.provenance.begin(), out.provenance.end(),
                                      Provenance::unchanged));
        CHECK(perturbed >= prev_perturbed);
        prev_perturbed = perturbed;
    }
}

TEST_CASE("fog scatter points sit strictly inside their original ray") {
    Rng rng(33);
    PointCloud cloud = test_util::random_cloud(rng, 3000, 20.0);
    LabelArray labels = test_util::random_labels(rng, 3000, 6, 0);
    WeatherParams params = fog_params(0.12);
    params.remove_lost_points = false;  // keep everything to track indices
    Rng sim_rng(5);
    BridgeSample out = simulate_fog(cloud, labels, params, sim_rng);
    REQUIRE(out.cloud.size() == cloud.size());
    std::size_t scattered = 0;
    for (std::size_t i = 0; i < out.cloud.size(); ++i) {
        if (out.provenance[i] != Provenance::scattered) continue;
        ++scattered;
        const Point& a = cloud.points[i];
        const Point& b = out.cloud.points[i];
        double ra = point_range(a), rb = point_range(b);
        CHECK(rb < ra);
        CHECK(rb >= params.r_min * (1.0 - 1e-6));
        // same unit direction
        double dot = (double(a.x) * b.x + double(a.y) * b.y + double(a.z) * b.z);
        CHECK(dot / (ra * rb) == Catch::Approx(1.0).epsilon(1e-6));
    }
    REQUIRE(scattered > 0);
}

TEST_CASE("fog output intensity respects the noise floor") {
    Rng rng(34);
    PointCloud cloud = test_util::random_cloud(rng, 3000, 25.0);
    LabelArray labels = test_util::random_labels(rng, 3000, 6, 0);
    Rng sim_rng(6);
    BridgeSample out = simulate_fog(cloud, labels, fog_params(0.1), sim_rng);
    CHECK(out.cloud.size() < cloud.size());  // some beams are lost at this alpha
    for (const Point& p : out.cloud.points) CHECK(p.intensity >= 0.03f);
}

TEST_CASE("fog scattered points get the ignore label by default") {
    Rng rng(35);
    PointCloud cloud = test_util::random_cloud(rng, 2000, 20.0);
    LabelArray labels = test_util::random_labels(rng, 2000, 6, 0, 0.0);
    WeatherParams params = fog_params(0.12);

    Rng sim_rng(8);
    BridgeSample out = simulate_fog(cloud, labels, params, sim_rng);
    for (std::size_t i = 0; i < out.cloud.size(); ++i) {
        if (out.provenance[i] == Provenance::scattered)
            CHECK(out.labels.labels[i] == labels.ignore_id);
        else
            CHECK(out.labels.labels[i] != labels.ignore_id);
    }

    params.scatter_keeps_label = true;
    Rng sim_rng2(8);
    BridgeSample kept = simulate_fog(cloud, labels, params, sim_rng2);
    for (std::size_t i = 0; i < kept.cloud.size(); ++i)
        CHECK(kept.labels.labels[i] != labels.ignore_id);
}

TEST_CASE("simulate_fog rejects wrong kind and bad alpha") {
    Rng rng(36);
    PointCloud cloud = test_util::random_cloud(rng, 10);
    LabelArray labels = test_util::random_labels(rng, 10, 6, 0);
    Rng sim_rng(1);
    WeatherParams p = fog_params(0.1, WeatherKind::rain);
    CHECK_THROWS_AS(simulate_fog(cloud, labels, p, sim_rng), std::invalid_argument);
    WeatherParams q = fog_params(-0.1);
    CHECK_THROWS_AS(simulate_fog(cloud, labels, q, sim_rng), std::invalid_argument);
}

namespace {

WeatherParams precip_params(double rate, double alpha, WeatherKind kind) {
    WeatherParams p;
    p.kind = kind;
    p.rate = rate;
    p.alpha = alpha;
    return p;
}

}  // namespace

TEST_CASE("simulate_precipitation identity at zero rate and alpha") {
    Rng rng(41);
    PointCloud cloud = test_util::random_cloud(rng, 500);
    LabelArray labels = test_util::random_labels(rng, 500, 6, 0);
    Rng sim_rng(2);
    BridgeSample out = simulate_precipitation(
        cloud, labels, precip_params(0.0, 0.0, WeatherKind::rain), sim_rng);
    CHECK(out.cloud == cloud);
    CHECK(out.labels == labels);
}

TEST_CASE("precipitation scattered count grows with rate") {
    Rng rng(42);
    PointCloud cloud = test_util::random_cloud(rng, 5000, 20.0);
    LabelArray labels = test_util::random_labels(rng, 5000, 6, 0);
    std::size_t prev = 0;
    for (double rate : {0.1, 0.5, 1.0}) {
        Rng sim_rng(77);
        BridgeSample out = simulate_precipitation(
            cloud, labels, precip_params(rate, 0.004, WeatherKind::snow), sim_rng);
        std::size_t scattered = std::count(out.provenance.begin(),
                                           out.provenance.end(),
                                           Provenance::scattered);
        CHECK(scattered >= prev);
        prev = scattered;
    }
    CHECK(prev > 0);
}

TEST_CASE("precipitation scatter ranges are smaller than the originals") {
    Rng rng(43);
    PointCloud cloud = test_util::random_cloud(rng, 4000, 20.0);
    LabelArray labels = test_util::random_labels(rng, 4000, 6, 0);
    WeatherParams params = precip_params(1.0, 0.004, WeatherKind::snow);
    params.remove_lost_points = false;
    Rng sim_rng(3);
    BridgeSample out = simulate_precipitation(cloud, labels, params, sim_rng);
    REQUIRE(out.cloud.size() == cloud.size());
    std::size_t scattered = 0;
    for (std::size_t i = 0; i < out.cloud.size(); ++i) {
        if (out.provenance[i] != Provenance::scattered) continue;
        ++scattered;
        CHECK(point_range(out.cloud.points[i]) < point_range(cloud.points[i]));
    }
    REQUIRE(scattered > 100);
}

TEST_CASE("simulate_precipitation rejects negative rate") {
    Rng rng(44);
    PointCloud cloud = test_util::random_cloud(rng, 10);
    LabelArray labels = test_util::random_labels(rng, 10, 6, 0);
    Rng sim_rng(1);
    CHECK_THROWS_AS(simulate_precipitation(
                        cloud, labels, precip_params(-0.5, 0.002, WeatherKind::rain),
                        sim_rng),
                    std::invalid_argument);
}

TEST_CASE("wet_ground identity and degenerate drop") {
    Rng rng(51);
    PointCloud cloud = test_util::random_cloud(rng, 800);
    LabelArray labels = test_util::random_labels(rng, 800, 6, 0, 0.0);
    WeatherParams params;
    params.wet_ground = true;
    params.ground_classes = {1};

    SECTION("p_drop=0, w=1 is identity") {
        params.wet_drop_prob = 0.0;
        params.wet_reflectance = 1.0;
        Rng r(4);
        auto [c, l] = wet_ground(cloud, labels, params, r);
        CHECK(c == cloud);
        CHECK(l == labels);
    }

    SECTION("p_drop=1 removes every ground point") {
        params.wet_drop_prob = 1.0;
        Rng r(4);
        auto [c, l] = wet_ground(cloud, labels, params, r);
        for (auto y : l.labels) CHECK(y != 1);
    }

    SECTION("non-ground points are untouched for any parameters") {
        params.wet_drop_prob = 0.7;
        params.wet_reflectance = 0.3;
        Rng r(4);
        auto [c, l] = wet_ground(cloud, labels, params, r);
        std::size_t non_ground_in = 0, non_ground_out = 0;
        for (auto y : labels.labels)
            if (y != 1) ++non_ground_in;
        for (auto y : l.labels)
            if (y != 1) ++non_ground_out;
        CHECK(non_ground_in == non_ground_out);
    }

    SECTION("empty ground set is a no-op") {
        params.ground_classes = {};
        params.wet_drop_prob = 1.0;
        Rng r(4);
        auto [c, l] = wet_ground(cloud, labels, params, r);
        CHECK(c == cloud);
    }
}

TEST_CASE("generate_bridge clear composition is identity") {
    Rng rng(61);
    PointCloud cloud = test_util::random_cloud(rng, 300);
    LabelArray labels = test_util::random_labels(rng, 300, 6, 0);
    BridgeComposition comp;
    comp.w_clear = 1.0;
    comp.w_light_fog = comp.w_dense_fog = comp.w_rain = comp.w_snow = 0.0;
    Rng sim_rng(9);
    BridgeSample out = generate_bridge(cloud, labels, comp, WeatherParams{}, sim_rng);
    CHECK(out.cloud == cloud);
    CHECK(out.labels == labels);
    CHECK(out.weather.kind == WeatherKind::clear);
}

TEST_CASE("generate_bridge is deterministic under a fixed seed") {
    Rng rng(62);
    PointCloud cloud = test_util::random_cloud(rng, 2000, 20.0);
    LabelArray labels = test_util::random_labels(rng, 2000, 6, 0);
    BridgeComposition comp;
    comp.w_clear = comp.w_light_fog = comp.w_rain = comp.w_snow = 0.0;
    comp.w_dense_fog = 1.0;

    Rng r1(123), r2(123);
    BridgeSample a = generate_bridge(cloud, labels, comp, WeatherParams{}, r1);
    BridgeSample b = generate_bridge(cloud, labels, comp, WeatherParams{}, r2);
    CHECK(a.cloud == b.cloud);
    CHECK(a.labels == b.labels);
    CHECK(a.provenance == b.provenance);
    CHECK(a.weather.alpha == b.weather.alpha);
}

TEST_CASE("generate_bridge samples kinds at the composition frequencies") {
    Rng rng(63);
    PointCloud cloud = test_util::random_cloud(rng, 50, 15.0);
    LabelArray labels = test_util::random_labels(rng, 50, 6, 0);
    BridgeComposition comp;  // default: equal over the four adverse kinds
    Rng sim_rng(1234);
    std::map<WeatherKind, int> counts;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        BridgeSample out = generate_bridge(cloud, labels, comp, WeatherParams{}, sim_rng);
        counts[out.weather.kind]++;
    }
    CHECK(counts[WeatherKind::clear] == 0);
    for (WeatherKind k : {WeatherKind::light_fog, WeatherKind::dense_fog,
                          WeatherKind::rain, WeatherKind::snow}) {
        double freq = counts[k] / double(trials);
        CHECK(freq >= 0.2);
        CHECK(freq <= 0.3);
    }
}

TEST_CASE("generate_bridge rejects all-zero weights") {
    Rng rng(64);
    PointCloud cloud = test_util::random_cloud(rng, 10);
    LabelArray labels = test_util::random_labels(rng, 10, 6, 0);
    BridgeComposition comp;
    comp.w_clear = comp.w_light_fog = comp.w_dense_fog = comp.w_rain = comp.w_snow = 0.0;
    Rng sim_rng(1);
    CHECK_THROWS_AS(generate_bridge(cloud, labels, comp, WeatherParams{}, sim_rng),
                    std::invalid_argument);
}

TEST_CASE("fog alpha draws come from the configured coefficient sets") {
    Rng rng(65);
    PointCloud cloud = test_util::random_cloud(rng, 50, 15.0);
    LabelArray labels = test_util::random_labels(rng, 50, 6, 0);
    BridgeComposition comp;
    comp.w_clear = comp.w_rain = comp.w_snow = 0.0;
    comp.w_light_fog = 1.0;
    comp.w_dense_fog = 0.0;
    Rng sim_rng(5);
    for (int i = 0; i < 50; ++i) {
        BridgeSample out = generate_bridge(cloud, labels, comp, WeatherParams{}, sim_rng);
        bool in_set = std::find(comp.light_fog_alphas.begin(),
                                comp.light_fog_alphas.end(),
                                out.weather.alpha) != comp.light_fog_alphas.end();
        CHECK(in_set);
    }
}
