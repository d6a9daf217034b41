// SPDX-License-Identifier: Apache-2.0
#include "gescl/errors.hpp"
#include "gescl/kernels.hpp"
#include "gescl/pgd.hpp"

#include "support/fixtures.hpp"
#include "support/prox_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gescl;
using gescl::testing::max_abs_diff;
using gescl::testing::ProxTerm;
using gescl::testing::random_set;
using gescl::testing::random_vector;
using gescl::testing::tiny_arch;

namespace {

double norm2(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

double norm1(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += std::abs(x);
    return s;
}

std::vector<double> all_params(const MultiHeadNetwork& net)
{
    std::vector<double> out;
    for (const auto& l : net.layers()) {
        out.insert(out.end(), l.kernel.values().begin(), l.kernel.values().end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    for (const auto& h : net.heads()) {
        out.insert(out.end(), h.weights.begin(), h.weights.end());
        out.insert(out.end(), h.bias.begin(), h.bias.end());
    }
    return out;
}

} // namespace

TEST_CASE("stability prox examples")
{
    std::vector<double> f{2.0, 2.0};
    const std::vector<double> anchor{0.0, 0.0};
    const auto r = prox_stability(f, anchor, 1.0, 1.0, 0.2828427, true);
    CHECK(r.beta == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(f[0] == doctest::Approx(1.8).epsilon(1e-6));
    CHECK(f[1] == doctest::Approx(1.8).epsilon(1e-6));
    CHECK(!r.clipped);

    std::vector<double> g{0.3, -0.4};
    const std::vector<double> a{0.1, 0.2};
    const auto c = prox_stability(g, a, 2.0, 1.0, 1.0, true);
    CHECK(c.clipped);
    CHECK(c.beta == 1.0);
    CHECK(g == a);

    std::vector<double> same{0.5, 0.5};
    const auto d = prox_stability(same, std::vector<double>{0.5, 0.5}, 1.0, 0.1, 1.0, true);
    CHECK(d.clipped);
    CHECK(same == std::vector<double>{0.5, 0.5});

    std::vector<double> h{1.0, 2.0};
    const auto z = prox_stability(h, anchor, 0.0, 1.0, 5.0, true);
    CHECK(z.beta == 0.0);
    CHECK(h == std::vector<double>{1.0, 2.0});
}

TEST_CASE("plasticity prox examples")
{
    std::vector<double> a{3.0, 4.0};
    auto r = prox_plasticity(a, 2, 1.0, 1.0, 1.0, true);
    CHECK(r.xi == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r.eta == 0.0);
    CHECK(a[0] == doctest::Approx(2.4).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(3.2).epsilon(1e-15));

    std::vector<double> b{1.0, -2.0};
    r = prox_plasticity(b, 2, 0.0, 1.0, 0.1, true);
    CHECK(r.eta == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(b[0] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(b[1] == doctest::Approx(-1.7).epsilon(1e-15));

    std::vector<double> c{0.3, -0.4, 0.1};
    r = prox_plasticity(c, 2, 1.0, 1.0, 0.6, true);
    CHECK(r.zeroed);
    CHECK(r.clipped);
    CHECK(r.xi == 1.0);
    CHECK(c == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("exclusive shrink stops at zero with clipping and crosses it without")
{
    std::vector<double> clipped{0.05, -2.0, 0.1};
    prox_plasticity(clipped, 2, 0.0, 1.0, 0.1, true);  // eta = 0.1 * 2.05
    CHECK(clipped[0] == 0.0);
    CHECK(clipped[1] == doctest::Approx(-1.795));
    CHECK(clipped[2] == 0.1);

    std::vector<double> literal{0.05, -2.0, 0.1};
    prox_plasticity(literal, 2, 0.0, 1.0, 0.1, false);
    CHECK(literal[0] == doctest::Approx(0.05 - 0.205));
    CHECK(literal[1] == doctest::Approx(-1.795));

    std::vector<double> big{0.3, 0.4};
    const auto r = prox_plasticity(big, 2, 1.0, 1.0, 1.0, false);
    CHECK(r.xi == doctest::Approx(2.0));
    CHECK(big[0] == doctest::Approx(-0.3));
}

TEST_CASE("prox properties on random filters")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 40;
        const auto v = random_vector(n, 1000 + trial);
        const auto anchor = random_vector(n, 5000 + trial);
        const double alpha = 0.5 * u(rng);
        const double mu = 4.0 * u(rng);
        const double gamma = 2.0 * u(rng);

        auto s = v;
        const auto rs = prox_stability(s, anchor, gamma, alpha, mu, true);
        CHECK(rs.beta >= 0.0);
        CHECK(rs.beta <= 1.0);
        for (std::size_t e = 0; e < n; ++e) {
            CHECK(s[e] >= std::min(v[e], anchor[e]) - 1e-15);
            CHECK(s[e] <= std::max(v[e], anchor[e]) + 1e-15);
        }

        const double p = u(rng);
        auto q = v;
        const auto rp = prox_plasticity(q, n - 1, p, alpha, mu, true);
        CHECK(rp.xi >= 0.0);
        CHECK(rp.xi <= 1.0);
        CHECK(norm2(q) <= norm2(v) + 1e-15);
        CHECK(norm1(q) <= norm1(v) + 1e-15);
    }
}

TEST_CASE("group and stability closed forms are the exact prox")
{
    const double alpha = 1e-3;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + (trial * 7) % 63;
        const auto v = random_vector(n, 300 + trial);
        const auto anchor = random_vector(n, 400 + trial);

        ProxTerm st{ProxTerm::Kind::stability, 20.0, 1.0, 0, anchor};
        const auto want_s = testing::prox_oracle(v, st, alpha);
        auto got_s = v;
        prox_stability(got_s, anchor, 2.0, alpha, 10.0, true);
        // Compare the displacement, which is what the prox actually changes.
        std::vector<double> ds(n), dw(n);
        for (std::size_t e = 0; e < n; ++e) {
            ds[e] = got_s[e] - v[e];
            dw[e] = want_s[e] - v[e];
        }
        CHECK(testing::relative_l2(ds, dw) <= 1e-6);

        ProxTerm gr{ProxTerm::Kind::plasticity, 30.0, 1.0, n - 1, {}};
        const auto want_g = testing::prox_oracle(v, gr, alpha);
        auto got_g = v;
        prox_plasticity(got_g, n - 1, 1.0, alpha, 30.0, true);
        for (std::size_t e = 0; e < n; ++e) {
            ds[e] = got_g[e] - v[e];
            dw[e] = want_g[e] - v[e];
        }
        CHECK(testing::relative_l2(ds, dw) <= 1e-6);
    }
}

TEST_CASE("oracle reduces to the identity without a term")
{
    const auto v = random_vector(10, 1);
    CHECK(testing::prox_oracle(v, ProxTerm{}, 0.1) == v);
}

TEST_CASE("oracle reproduces block soft-thresholding")
{
    const auto v = random_vector(12, 2);
    const double alpha = 0.05, mu = 3.0;
    const auto x = testing::prox_oracle(v, ProxTerm{ProxTerm::Kind::plasticity, mu, 1.0, 11, {}}, alpha);
    const double scale = std::max(0.0, 1.0 - alpha * mu / norm2(v));
    for (std::size_t e = 0; e < v.size(); ++e)
        CHECK(x[e] == doctest::Approx(scale * v[e]).epsilon(1e-9));
}

TEST_CASE("epoch order is a seeded permutation")
{
    const auto a = epoch_order(50, 9, 1, 2);
    CHECK(a == epoch_order(50, 9, 1, 2));
    CHECK(a != epoch_order(50, 9, 1, 3));
    CHECK(a != epoch_order(50, 9, 2, 2));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 50; ++i)
        CHECK(sorted[i] == i);
}

TEST_CASE("sgd epoch")
{
    auto net = build_network(tiny_arch(), 3);
    net.add_head(2);
    const auto data = random_set(64, {1, 8, 8, 2}, 2, 4);
    OptimizerConfig opt;
    opt.batch_size = 16;
    opt.alpha = 0.05;
    opt.seed = 77;

    SUBCASE("matches four sequential hand-applied updates")
    {
        auto expected = net;
        const auto order = epoch_order(64, 77, 0, 0);
        for (std::size_t b = 0; b < 64; b += 16) {
            const auto batch = data.select(std::span(order).subspan(b, 16));
            const auto g = testing::analytic_gradient(expected, batch, 0);
            std::size_t k = 0;
            for (std::size_t i = 0; i < expected.num_layers(); ++i) {
                for (auto& w : expected.layer(i).kernel.values())
                    w -= 0.05 * g[k++];
                for (auto& w : expected.layer(i).bias)
                    w -= 0.05 * g[k++];
            }
            for (auto& w : expected.head(0).weights)
                w -= 0.05 * g[k++];
            for (auto& w : expected.head(0).bias)
                w -= 0.05 * g[k++];
        }
        sgd_epoch(net, data, 0, opt, 0, 0);
        CHECK(net == expected);
    }
    SUBCASE("zero learning rate changes nothing")
    {
        const auto before = net;
        opt.alpha = 0.0;
        sgd_epoch(net, data, 0, opt, 0, 0);
        CHECK(net == before);
    }
    SUBCASE("single sample single step")
    {
        const auto one = data.slice(0, 1);
        const auto g = testing::analytic_gradient(net, one, 0);
        const auto before = all_params(net);
        sgd_epoch(net, one, 0, opt, 0, 0);
        const auto after = all_params(net);
        for (std::size_t k = 0; k < g.size(); ++k)
            CHECK(after[k] == before[k] - 0.05 * g[k]);
    }
    SUBCASE("empty data is an input error")
    {
        CHECK_THROWS_AS(sgd_epoch(net, LabeledSet{}, 0, opt, 0, 0), InputError);
    }
}

TEST_CASE("optimizer config validation")
{
    OptimizerConfig c;
    c.validate();
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("train_task reductions")
{
    auto net = build_network(tiny_arch(), 5);
    net.add_head(2);
    const auto data = random_set(24, {1, 8, 8, 2}, 2, 6);
    const auto fpl = net.filters_per_layer();
    const auto imp = ImportanceState::initial(fpl, 1.0, 1e-8);
    OptimizerConfig opt;
    opt.alpha = 0.05;
    opt.batch_size = 8;
    opt.seed = 3;

    SUBCASE("one epoch without regularization is plain SGD")
    {
        auto plain = net;
        sgd_epoch(plain, data, 0, opt, 0, 0);
        train_task(net, data, 0, 0, AnchorStore{}, imp, FilterPartition::all_unimportant(fpl), RegularizerConfig{},
                   opt);
        CHECK(net == plain);
    }
    SUBCASE("huge stability on every filter pins the trunk to its anchors")
    {
        const auto part = FilterPartition::all_important(fpl);
        const auto anchors = AnchorStore::capture(net, part, 0);
        ImportanceState strong = imp;
        for (auto& l : strong.accumulated)
            for (auto& g : l)
                g = 1.0;
        RegularizerConfig reg;
        reg.mu_s = 1e6;
        opt.epochs = 3;
        const auto log = train_task(net, data, 0, 1, anchors, strong, part, reg, opt);
        CHECK(log.size() == 3);
        for (const auto& id : part.important())
            CHECK(filter_values(net.layer(id.layer), id.filter) == anchors.values(id));
        CHECK(log.back().clipped_filters == net.total_filters());
        CHECK(log.back().stab_penalty == 0.0);
    }
}

TEST_CASE("train_task follows sgd then per-filter prox each epoch")
{
    // Two filters per layer; filter 0 of each layer important, filter 1 not.
    ArchitectureSpec arch;
    arch.height = 6;
    arch.width = 6;
    arch.channels = 1;
    arch.blocks = {{3, 2}, {3, 2}};
    auto net = build_network(arch, 8);
    net.add_head(2);
    const auto data = random_set(20, {1, 6, 6, 1}, 2, 9);
    PerFilter<bool> mask{{true, false}, {true, false}};
    const FilterPartition part(mask);
    auto anchor_src = net;
    for (auto& g : anchor_src.filter_groups())
        for (std::size_t e = 0; e < g.kernel_length(); ++e)
            g.kernel(e) *= 0.5;
    const auto anchors = AnchorStore::capture(anchor_src, part, 0);
    ImportanceState imp = ImportanceState::initial(net.filters_per_layer(), 1.0, 1e-8);
    imp.accumulated = {{0.7, 0.0}, {1.3, 0.0}};
    RegularizerConfig reg;
    reg.mu_s = 0.8;
    reg.mu_p = 0.6;
    OptimizerConfig opt;
    opt.alpha = 0.05;
    opt.epochs = 3;
    opt.batch_size = 7;
    opt.seed = 21;

    auto expected = net;
    for (std::size_t k = 0; k < 3; ++k) {
        sgd_epoch(expected, data, 0, opt, 4, k);
        for (std::size_t i = 0; i < 2; ++i) {
            // Important filter: blend toward the anchor.
            FilterGroup fi = expected.filter_group({i, 0});
            auto f = fi.values();
            const auto& a = anchors.values({i, 0});
            double d = 0.0;
            for (std::size_t e = 0; e < f.size(); ++e)
                d += (f[e] - a[e]) * (f[e] - a[e]);
            const double beta = std::min(1.0, opt.alpha * reg.mu_s * imp.accumulated[i][0] / std::sqrt(d));
            for (std::size_t e = 0; e < f.size(); ++e)
                f[e] = (1 - beta) * f[e] + beta * a[e];
            fi.assign(f);
            // Unimportant filter: group shrink, then soft-threshold the kernel.
            FilterGroup fu = expected.filter_group({i, 1});
            auto u = fu.values();
            const double p = i == 0 ? 1.0 : 0.0;
            double sq = 0.0, l1 = 0.0;
            for (std::size_t e = 0; e < u.size(); ++e)
                sq += u[e] * u[e];
            for (std::size_t e = 0; e + 1 < u.size(); ++e)
                l1 += std::abs(u[e]);
            const double xi = std::min(1.0, opt.alpha * reg.mu_p * p / std::sqrt(sq));
            const double eta = opt.alpha * reg.mu_p * (1 - p) * l1;
            for (std::size_t e = 0; e < u.size(); ++e) {
                const double s = (1 - xi) * u[e];
                u[e] = e + 1 == u.size() ? s : (s > 0 ? std::max(0.0, s - eta) : std::min(0.0, s + eta));
            }
            fu.assign(u);
        }
    }
    const auto log = train_task(net, data, 0, 4, anchors, imp, part, reg, opt);
    CHECK(max_abs_diff(all_params(net), all_params(expected)) <= 1e-12);
    CHECK(log.size() == 3);
    for (const auto& rec : log) {
        CHECK(rec.task == 4);
        CHECK(rec.prox.size() == 4);
        for (const auto& r : rec.prox)
            CHECK(r.stability == part.is_important(r.id));
    }
}

TEST_CASE("prox step never crosses the partition")
{
    auto net = build_network(tiny_arch(), 11);
    PerFilter<bool> mask{{true, false, true}, {false, true, false, true}};
    const FilterPartition part(mask);
    const auto anchors = AnchorStore::capture(net, part, 0);
    auto before = net;
    ImportanceState imp = ImportanceState::initial(net.filters_per_layer(), 1.0, 1e-8);
    for (auto& l : imp.accumulated)
        std::fill(l.begin(), l.end(), 1.0);
    OptimizerConfig opt;
    opt.alpha = 0.1;

    // Only plasticity active: important filters must not move.
    RegularizerConfig reg;
    reg.mu_p = 1.0;
    apply_prox(net, anchors, imp, part, reg, opt);
    for (const auto& id : part.important())
        CHECK(filter_values(net.layer(id.layer), id.filter) == filter_values(before.layer(id.layer), id.filter));
    for (const auto& id : part.unimportant())
        CHECK(filter_values(net.layer(id.layer), id.filter) != filter_values(before.layer(id.layer), id.filter));

    // Only stability active, with parameters moved off their anchors:
    // unimportant filters must not move.
    net = before;
    for (auto& g : net.filter_groups())
        g.bias() += 0.3;
    const auto moved = net;
    reg = {};
    reg.mu_s = 1.0;
    apply_prox(net, anchors, imp, part, reg, opt);
    for (const auto& id : part.unimportant())
        CHECK(filter_values(net.layer(id.layer), id.filter) == filter_values(moved.layer(id.layer), id.filter));
    for (const auto& id : part.important())
        CHECK(filter_values(net.layer(id.layer), id.filter) != filter_values(moved.layer(id.layer), id.filter));
}
