#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "mfgc/measures.hpp"
#include "mfgc/rng.hpp"

using namespace mfgc;
using Catch::Matchers::WithinAbs;

namespace {

DiscreteMeasure atom(double x, double w) {
    DiscreteMeasure m;
    m.atoms.push_back({x, w});
    return m;
}

DiscreteMeasure random_measure(SplitRng& rng, std::size_t n, double mass) {
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.next_uniform(0.0, 1.0);
    std::sort(xs.begin(), xs.end());
    std::vector<double> ws(n);
    double total = 0.0;
    for (auto& w : ws) {
        w = rng.next_uniform(0.01, 1.0);
        total += w;
    }
    DiscreteMeasure m;
    for (std::size_t i = 0; i < n; ++i)
        m.atoms.push_back({xs[i], ws[i] * mass / total});
    return m;
}

/**
 * Brute-force oracle for the chain-constrained LP behind dstar: maximize
 * sum c_j phi_j over |phi_j| <= 1, |phi_{j+1} - phi_j| <= gap_j, with phi
 * quantized to K uniform levels and the increment budget widened by
 * `widen`. Plain table DP with a sliding-window maximum; shares no code or
 * theory with the polyline solver it validates.
 */
double chain_lp_quantized(const std::vector<double>& c,
                          const std::vector<double>& gaps, int K,
                          double widen) {
    double spacing = 2.0 / (K - 1);
    auto level = [&](int s) { return -1.0 + spacing * s; };
    std::vector<double> value(K);
    for (int s = 0; s < K; ++s) value[s] = c[0] * level(s);
    for (std::size_t j = 1; j < c.size(); ++j) {
        int radius = static_cast<int>((gaps[j - 1] + widen) / spacing);
        std::vector<double> best(K);
        std::deque<int> window;
        int right = -1;
        for (int s = 0; s < K; ++s) {
            while (right < std::min(K - 1, s + radius)) {
                ++right;
                while (!window.empty() && value[window.back()] <= value[right])
                    window.pop_back();
                window.push_back(right);
            }
            while (window.front() < s - radius) window.pop_front();
            best[s] = value[window.front()];
        }
        for (int s = 0; s < K; ++s) value[s] = c[j] * level(s) + best[s];
    }
    return *std::max_element(value.begin(), value.end());
}

}  // namespace

TEST_CASE("pushforward pairs states with interpolated controls") {
    auto g = Grid1D::make(0.0, 1.0, 10, Boundary::Neumann);

    SECTION("zero control field gives m tensor delta_0") {
        auto m = measure_from_field(g, ScalarField(g.n_nodes(), 1.0));
        auto mu = pushforward(g, m, ScalarField(g.n_nodes(), 0.0));
        for (const auto& a : mu.atoms) REQUIRE(a.alpha == 0.0);
        REQUIRE(mu.total_mass() == m.total_mass());
    }

    SECTION("single atom picks the control at its site") {
        VectorField alpha(g.n_nodes());
        for (std::size_t i = 0; i < g.n_nodes(); ++i)
            alpha[i] = -4.0 * g.node(i);  // alpha(0.5) = -2
        auto mu = pushforward(g, atom(0.5, 1.0), alpha);
        REQUIRE(mu.atoms.size() == 1);
        REQUIRE_THAT(mu.atoms[0].x, WithinAbs(0.5, 0.0));
        REQUIRE_THAT(mu.atoms[0].alpha, WithinAbs(-2.0, 1e-14));
        REQUIRE(mu.atoms[0].w == 1.0);
    }

    SECTION("weights are copied verbatim") {
        SplitRng rng(7);
        auto m = random_measure(rng, 9, 0.83);
        VectorField alpha(g.n_nodes(), 1.5);
        auto mu = pushforward(g, m, alpha);
        REQUIRE(mu.total_mass() == m.total_mass());
    }

    SECTION("atom outside the grid is rejected") {
        REQUIRE_THROWS_AS(
            pushforward(g, atom(1.5, 1.0), ScalarField(g.n_nodes(), 0.0)),
            InterpolationError);
    }
}

TEST_CASE("control moments") {
    SECTION("unit atom: every order returns |alpha|") {
        ControlMeasure mu;
        mu.atoms.push_back({0.3, -2.0, 1.0});
        for (double q : {1.0, 2.0, 7.0, kInfiniteOrder})
            REQUIRE_THAT(lambda_q(mu, q), WithinAbs(2.0, 1e-14));
    }

    SECTION("two equal atoms, controls 0 and 2, order 2 gives sqrt 2") {
        ControlMeasure mu;
        mu.atoms.push_back({0.2, 0.0, 0.5});
        mu.atoms.push_back({0.8, 2.0, 0.5});
        REQUIRE_THAT(lambda_q(mu, 2.0), WithinAbs(std::sqrt(2.0), 1e-14));
    }

    SECTION("moment order chain on random sub-probability measures") {
        SplitRng rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            ControlMeasure mu;
            std::size_t n = 1 + rng.next_u64() % 8;
            double mass = rng.next_uniform(0.05, 1.0);
            for (std::size_t i = 0; i < n; ++i)
                mu.atoms.push_back({rng.next_uniform(0.0, 1.0),
                                    rng.next_uniform(-3.0, 3.0),
                                    mass / static_cast<double>(n)});
            double l1 = lambda_q(mu, 1.0);
            double l2 = lambda_q(mu, 2.0);
            double li = lambda_q(mu, kInfiniteOrder);
            REQUIRE(l1 <= l2 + 1e-12);
            REQUIRE(l2 <= li + 1e-12);
        }
    }

    SECTION("empty measure gives 0; orders below 1 are rejected") {
        REQUIRE(lambda_q(ControlMeasure{}, 2.0) == 0.0);
        ControlMeasure mu;
        mu.atoms.push_back({0.5, 1.0, 0.5});
        REQUIRE_THROWS_AS(lambda_q(mu, 0.5), MetricDomainError);
    }

    SECTION("sup moment of a pushforward is the max control over support") {
        auto g = Grid1D::make(0.0, 1.0, 8, Boundary::Neumann);
        auto m = measure_from_field(g, ScalarField(g.n_nodes(), 1.0));
        VectorField alpha(g.n_nodes());
        for (std::size_t i = 0; i < g.n_nodes(); ++i)
            alpha[i] = std::sin(3.0 * g.node(i));
        double expect = 0.0;
        for (std::size_t i = 0; i < g.n_nodes(); ++i)
            expect = std::max(expect, std::abs(alpha[i]));
        REQUIRE(lambda_q(pushforward(g, m, alpha), kInfiniteOrder) == expect);
    }
}

TEST_CASE("wasserstein distance on the line") {
    REQUIRE_THAT(w1(atom(0.2, 1.0), atom(0.7, 1.0)), WithinAbs(0.5, 1e-14));
    REQUIRE(w1(atom(0.4, 1.0), atom(0.4, 1.0)) == 0.0);

    SECTION("uniform density versus its median atom") {
        auto g = Grid1D::make(0.0, 1.0, 100, Boundary::Neumann);
        auto uniform = measure_from_field(g, ScalarField(g.n_nodes(), 1.0));
        REQUIRE_THAT(w1(uniform, atom(0.5, 1.0)), WithinAbs(0.25, g.h));
    }

    SECTION("non-probability input is rejected") {
        REQUIRE_THROWS_AS(w1(atom(0.2, 0.7), atom(0.7, 1.0)),
                          MetricDomainError);
    }

    SECTION("symmetry and triangle inequality on random triples") {
        SplitRng rng(23);
        for (int trial = 0; trial < 40; ++trial) {
            auto a = random_measure(rng, 5, 1.0);
            auto b = random_measure(rng, 4, 1.0);
            auto c = random_measure(rng, 6, 1.0);
            REQUIRE_THAT(w1(a, b), WithinAbs(w1(b, a), 1e-12));
            REQUIRE(w1(a, c) <= w1(a, b) + w1(b, c) + 1e-9);
            REQUIRE(w1(a, b) >= 0.0);
        }
    }
}

TEST_CASE("flat metric solves the chain program exactly") {
    SECTION("two unit atoms: distance saturates at the sup bound") {
        REQUIRE_THAT(dstar(atom(0.1, 1.0), atom(0.4, 1.0)),
                     WithinAbs(0.3, 1e-12));
        REQUIRE_THAT(dstar(atom(0.0, 1.0), atom(2.5, 1.0)),
                     WithinAbs(2.0, 1e-12));
    }

    SECTION("identical measures are at distance zero") {
        SplitRng rng(5);
        auto m = random_measure(rng, 6, 0.9);
        REQUIRE_THAT(dstar(m, m), WithinAbs(0.0, 1e-14));
    }

    SECTION("distance to the zero measure is the total mass") {
        SplitRng rng(6);
        auto m = random_measure(rng, 5, 0.62);
        REQUIRE_THAT(dstar(DiscreteMeasure{}, m),
                     WithinAbs(m.total_mass(), 1e-12));
    }

    SECTION("bracketed by the quantized brute force") {
        SplitRng rng(31);
        const int K = 2001;
        const double spacing = 2.0 / (K - 1);
        for (int trial = 0; trial < 50; ++trial) {
            auto a = random_measure(rng, 2 + rng.next_u64() % 6,
                                    rng.next_uniform(0.2, 1.0));
            auto b = random_measure(rng, 2 + rng.next_u64() % 6,
                                    rng.next_uniform(0.2, 1.0));
            auto diff = detail::merged_difference(a, b);
            std::vector<double> c, gaps;
            for (std::size_t j = 0; j < diff.size(); ++j) {
                c.push_back(diff[j].second);
                if (j + 1 < diff.size())
                    gaps.push_back(diff[j + 1].first - diff[j].first);
            }
            double abs_c = 0.0;
            for (double v : c) abs_c += std::abs(v);
            double lower = chain_lp_quantized(c, gaps, K, 0.0);
            double upper =
                chain_lp_quantized(c, gaps, K, spacing) + 0.5 * spacing * abs_c;
            double exact = dstar(a, b);
            REQUIRE(exact >= lower - 1e-12);
            REQUIRE(exact <= upper + 1e-12);
        }
    }

    SECTION("dominated by total variation and by transport") {
        SplitRng rng(47);
        for (int trial = 0; trial < 40; ++trial) {
            auto a = random_measure(rng, 6, 1.0);
            auto b = random_measure(rng, 6, 1.0);
            REQUIRE(dstar(a, b) <= w1(a, b) + 1e-12);
            auto diff = detail::merged_difference(a, b);
            double tv = 0.0;
            for (const auto& p : diff) tv += std::abs(p.second);
            REQUIRE(dstar(a, b) <= 2.0 * tv + 1e-12);
        }
    }

    SECTION("metric axioms on random sub-probability triples") {
        SplitRng rng(53);
        for (int trial = 0; trial < 40; ++trial) {
            auto a = random_measure(rng, 4, rng.next_uniform(0.1, 1.0));
            auto b = random_measure(rng, 5, rng.next_uniform(0.1, 1.0));
            auto c = random_measure(rng, 3, rng.next_uniform(0.1, 1.0));
            REQUIRE_THAT(dstar(a, b), WithinAbs(dstar(b, a), 1e-12));
            REQUIRE(dstar(a, b) >= 0.0);
            REQUIRE(dstar(a, c) <= dstar(a, b) + dstar(b, c) + 1e-9);
        }
    }

    SECTION("separates distinct measures") {
        auto m1 = atom(0.25, 0.5);
        auto m2 = atom(0.75, 0.5);
        REQUIRE(dstar(m1, m2) > 0.2);
    }
}

TEST_CASE("sub-probability restriction") {
    SECTION("mass one passes through unchanged") {
        SplitRng rng(3);
        auto m = random_measure(rng, 5, 1.0);
        auto r = restrict_normalize(m);
        for (std::size_t i = 0; i < m.atoms.size(); ++i)
            REQUIRE_THAT(r.atoms[i].w, WithinAbs(m.atoms[i].w, 1e-15));
    }

    SECTION("mass two is halved") {
        auto r = restrict_normalize(atom(0.5, 2.0));
        REQUIRE_THAT(r.atoms[0].w, WithinAbs(1.0, 1e-15));
    }

    SECTION("zero maps to zero and signs are stripped") {
        auto r = restrict_normalize(DiscreteMeasure{});
        REQUIRE(r.atoms.empty());
        DiscreteMeasure signed_m;
        signed_m.atoms.push_back({0.3, -0.4});
        auto rs = restrict_normalize(signed_m);
        REQUIRE_THAT(rs.atoms[0].w, WithinAbs(0.4, 1e-15));
    }

    SECTION("field form agrees with quadrature normalization") {
        auto g = Grid1D::make(0.0, 1.0, 10, Boundary::Neumann);
        ScalarField m(g.n_nodes(), 3.0);
        auto r = restrict_normalize(g, m);
        REQUIRE_THAT(integrate(g, r), WithinAbs(1.0, 1e-13));
        ScalarField small(g.n_nodes(), 0.25);
        auto rs = restrict_normalize(g, small);
        for (double v : rs) REQUIRE_THAT(v, WithinAbs(0.25, 1e-15));
    }
}

TEST_CASE("density to measure conversion") {
    auto g = Grid1D::make(0.0, 1.0, 4, Boundary::Neumann);
    ScalarField m{1.0, 2.0, 0.0, 1.0, 3.0};
    auto mu = measure_from_field(g, m);
    REQUIRE(mu.atoms.size() == 5);
    REQUIRE_THAT(mu.atoms[0].w, WithinAbs(1.0 * 0.125, 1e-15));
    REQUIRE_THAT(mu.atoms[1].w, WithinAbs(2.0 * 0.25, 1e-15));
    REQUIRE_THAT(mu.total_mass(), WithinAbs(integrate(g, m), 1e-14));

    SECTION("negative densities are rejected; round-off is clamped") {
        ScalarField bad{1.0, -0.5, 0.0, 0.0, 0.0};
        REQUIRE_THROWS_AS(measure_from_field(g, bad), InvalidMeasureError);
        ScalarField tiny{1.0, -1e-13, 0.0, 0.0, 0.0};
        auto ok = measure_from_field(g, tiny);
        REQUIRE(ok.atoms[1].w == 0.0);
    }
}

TEST_CASE("csv export") {
    REQUIRE(to_csv(atom(0.5, 1.0)) == "x,w\n0.5,1\n");
    ControlMeasure mu;
    mu.atoms.push_back({0.25, -2.0, 0.5});
    REQUIRE(to_csv(mu) == "x,alpha,w\n0.25,-2,0.5\n");
}
