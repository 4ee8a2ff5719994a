#include <doctest.h>

#include <cmath>
#include <vector>

#include "tridiff/tensor.hpp"

using namespace tridiff;

namespace {

// naive triple-loop reference
std::vector<double> matmul_ref(const std::vector<double>& a, const std::vector<double>& b,
                               int m, int k, int n) {
    std::vector<double> c(m * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
    auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
    auto c = matmul(eye, b);
    CHECK(c.data() == std::vector<double>{3, 4, 5, 6});

    auto z = matmul(Tensor::from_data({1, 1}, {0.0}), Tensor::from_data({1, 1}, {7.0}));
    CHECK(z.data()[0] == 0.0);
}

TEST_CASE("matmul matches triple-loop reference") {
    Rng rng(101);
    auto a = Tensor::randu({3, 4}, rng, -2, 2);
    auto b = Tensor::randu({4, 2}, rng, -2, 2);
    auto c = matmul(a, b);
    auto ref = matmul_ref(a.data(), b.data(), 3, 4, 2);
    for (int i = 0; i < 6; ++i) CHECK(std::fabs(c.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("matmul shape errors name both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), ShapeError);
}

TEST_CASE("softmax symmetry, saturation, and formula") {
    auto u = softmax(Tensor::from_data({1, 3}, {0, 0, 0}));
    for (double p : u.data()) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto sat = softmax(Tensor::from_data({1, 3}, {1000, 0, 0}));
    CHECK(sat.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sat.data()[1] < 1e-12);
    for (double p : sat.data()) CHECK(std::isfinite(p));

    auto s = softmax(Tensor::from_data({1, 3}, {1, 2, 3}));
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i)
        CHECK(s.data()[i] == doctest::Approx(std::exp(i + 1.0) / z).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one under fuzz") {
    Rng rng(7);
    for (int trial = 0; trial < 10000; ++trial) {
        auto x = Tensor::randu({1, 8}, rng, -50, 50);
        auto s = softmax(x);
        double total = 0.0;
        for (double p : s.data()) total += p;
        REQUIRE(std::fabs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("masked cross entropy values") {
    // perfect prediction with huge margin
    auto logits = Tensor::from_data({1, 4}, {1000, 0, 0, 0});
    auto l = masked_cross_entropy(logits, {0}, {1}, {1.0});
    CHECK(l.item() == doctest::Approx(0.0).epsilon(1e-12));

    // vacuous mask
    auto l2 = masked_cross_entropy(logits, {0}, {0}, {1.0});
    CHECK(l2.item() == 0.0);

    // uniform logits over V=4 -> ln 4
    auto l3 = masked_cross_entropy(Tensor::from_data({1, 4}, {0, 0, 0, 0}), {2}, {1}, {1.0});
    CHECK(l3.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("masked cross entropy rejects out-of-vocabulary targets") {
    auto logits = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(masked_cross_entropy(logits, {4}, {1}, {1.0}), IndexError);
}

TEST_CASE("masked cross entropy ignores unmasked rows bit-exactly") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto base = Tensor::randu({4, 8}, rng, -3, 3);
        std::vector<uint8_t> mask = {1, 0, 1, 0};
        std::vector<int> targets = {3, 0, 5, 1};
        std::vector<double> weights = {1.0, 1.0, 2.0, 1.0};
        double ref = masked_cross_entropy(base, targets, mask, weights).item();

        auto tweaked_vals = base.data();
        for (int j = 0; j < 8; ++j) {
            tweaked_vals[1 * 8 + j] = rng.uniform(-100, 100);
            tweaked_vals[3 * 8 + j] = rng.uniform(-100, 100);
        }
        auto tweaked = Tensor::from_data({4, 8}, tweaked_vals);
        double again = masked_cross_entropy(tweaked, targets, mask, weights).item();
        REQUIRE(ref == again);  // bit-equal

        // gradient at unmasked rows is exactly zero
        auto p = Tensor::from_data({4, 8}, base.data(), true);
        masked_cross_entropy(p, targets, mask, weights).backward();
        for (int j = 0; j < 8; ++j) {
            REQUIRE(p.grad()[1 * 8 + j] == 0.0);
            REQUIRE(p.grad()[3 * 8 + j] == 0.0);
        }
    }
}

TEST_CASE("grad_check on quadratic matches analytic gradient") {
    auto x = Tensor::from_data({3}, {1, 2, 3}, true);
    auto f = [&] { return sum_all(mul(x, x)); };
    auto out = f();
    x.zero_grad();
    out.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));

    Rng rng(3);
    CHECK(grad_check(f, {x}, 1e-5, rng) < 1e-8);
}

TEST_CASE("grad_check rejects eps outside its domain") {
    auto x = Tensor::from_data({1}, {1.0}, true);
    auto f = [&] { return sum_all(x); };
    Rng rng(3);
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-2, rng), std::domain_error);
}

TEST_CASE("grad_check across primitive ops") {
    Rng rng(42);
    // each op exercised on 10 random instances, threshold 1e-4 at eps=1e-5
    for (int trial = 0; trial < 10; ++trial) {
        auto a = Tensor::randu({3, 4}, rng, -1, 1, true);
        auto b = Tensor::randu({4, 3}, rng, -1, 1, true);
        auto bias = Tensor::randu({3}, rng, -1, 1, true);
        auto gamma = Tensor::randu({3}, rng, 0.5, 1.5, true);
        auto beta = Tensor::randu({3}, rng, -0.5, 0.5, true);

        auto f = [&] {
            auto h = matmul(a, b);
            h = add_rowwise(h, bias);
            h = layer_norm(h, gamma, beta);
            h = gelu(h);
            auto s = softmax(h);
            return mean_all(mul(s, h));
        };
        REQUIRE(grad_check(f, {a, b, bias, gamma, beta}, 1e-5, rng) < 1e-4);
    }
}

TEST_CASE("grad_check on masked cross entropy") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto logits = Tensor::randu({4, 8}, rng, -2, 2, true);
        std::vector<int> targets(4);
        std::vector<uint8_t> mask(4);
        std::vector<double> weights(4);
        bool any = false;
        for (int i = 0; i < 4; ++i) {
            targets[i] = static_cast<int>(rng.below(8));
            mask[i] = rng.bernoulli(0.6) ? 1 : 0;
            any |= (mask[i] != 0);
            weights[i] = rng.uniform(0.5, 2.0);
        }
        if (!any) mask[0] = 1;
        auto f = [&] { return masked_cross_entropy(logits, targets, mask, weights); };
        REQUIRE(grad_check(f, {logits}, 1e-5, rng) < 1e-4);
    }
}

TEST_CASE("grad_check on attention, conv, embedding, normalize") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        auto q = Tensor::randu({3, 4}, rng, -1, 1, true);
        auto k = Tensor::randu({5, 4}, rng, -1, 1, true);
        auto v = Tensor::randu({5, 4}, rng, -1, 1, true);
        std::vector<uint8_t> keep(15, 1);
        keep[2] = 0;  // one blocked pair
        for (int j = 0; j < 5; ++j) keep[2 * 5 + j] = (j == 4);  // nearly-masked row
        auto f1 = [&] {
            auto c = masked_attention(q, k, v, keep, 0.5);
            return mean_all(mul(c, c));
        };
        REQUIRE(grad_check(f1, {q, k, v}, 1e-5, rng) < 1e-4);

        auto x = Tensor::randu({2, 2, 9}, rng, -1, 1, true);
        auto w = Tensor::randu({3, 2, 3}, rng, -1, 1, true);
        auto cb = Tensor::randu({3}, rng, -1, 1, true);
        auto f2 = [&] {
            auto y = conv1d(x, w, cb, 2);
            return mean_all(mul(y, y));
        };
        REQUIRE(grad_check(f2, {x, w, cb}, 1e-5, rng) < 1e-4);

        auto table = Tensor::randu({6, 4}, rng, -1, 1, true);
        auto f3 = [&] {
            auto e = embedding(table, {1, 3, 3, 0});
            auto n = l2_normalize_rows(e);
            return rowwise_sqdist_mean(n, e);
        };
        REQUIRE(grad_check(f3, {table}, 1e-5, rng) < 1e-4);
    }
}

TEST_CASE("ops are deterministic") {
    Rng rng(77);
    auto a = Tensor::randu({8, 8}, rng, -1, 1);
    auto b = Tensor::randu({8, 8}, rng, -1, 1);
    auto c1 = matmul(a, b);
    auto c2 = matmul(a, b);
    CHECK(c1.data() == c2.data());
    auto s1 = softmax(a);
    auto s2 = softmax(a);
    CHECK(s1.data() == s2.data());
}

TEST_CASE("masked softmax zeroes fully-masked rows") {
    auto x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    std::vector<uint8_t> keep = {1, 1, 0, 0, 0, 0};
    auto s = masked_softmax(x, keep);
    CHECK(s.data()[2] == 0.0);
    CHECK(s.data()[3] == 0.0);
    CHECK(s.data()[4] == 0.0);
    CHECK(s.data()[5] == 0.0);
    CHECK(s.data()[0] + s.data()[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (double p : s.data()) CHECK(std::isfinite(p));
}

TEST_CASE("straight-through passes values forward and gradient back unchanged") {
    auto lat = Tensor::from_data({2, 2}, {0.1, 0.2, 0.3, 0.4}, true);
    auto st = straight_through(lat, {1.0, 1.0, 2.0, 2.0});
    CHECK(st.data() == std::vector<double>{1.0, 1.0, 2.0, 2.0});
    sum_all(mul(st, st)).backward();
    // d/dlat sum(st^2) routed straight through: 2*st
    CHECK(lat.grad() == std::vector<double>{2.0, 2.0, 4.0, 4.0});
}

TEST_CASE("no NaN from forward ops on finite inputs") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        auto x = Tensor::randu({4, 6}, rng, -100, 100);
        for (double v : softmax(x).data()) REQUIRE(std::isfinite(v));
        for (double v : gelu(x).data()) REQUIRE(std::isfinite(v));
        auto g = Tensor::full({6}, 1.0);
        auto b = Tensor::zeros({6});
        for (double v : layer_norm(x, g, b).data()) REQUIRE(std::isfinite(v));
        for (double v : l2_normalize_rows(x).data()) REQUIRE(std::isfinite(v));
    }
}
