#include <cmath>
#include <doctest.h>

#include "ihas/numeric.hpp"

using namespace ihas;

TEST_CASE("affine_forward identity and hand cases") {
    std::vector<double> x{1.0, 0.0};
    auto out = affine_forward(x, DenseMatrix::identity(2), std::vector<double>{0.0, 0.0});
    CHECK(out == std::vector<double>{1.0, 0.0});

    DenseMatrix w(1, 2);
    w.at(0, 0) = 1.0;
    w.at(0, 1) = 1.0;
    auto out2 = affine_forward(std::vector<double>{2.0, 3.0}, w, std::vector<double>{-5.0});
    CHECK(out2 == std::vector<double>{0.0});

    CHECK_THROWS_AS(affine_forward(std::vector<double>{1.0}, w, std::vector<double>{0.0}),
                    ShapeError);
}

TEST_CASE("affine_forward matches naive double-loop oracle") {
    RngStream rng(42);
    DenseMatrix w(8, 16);
    for (auto& v : w.values) v = rng.uniform(-1.0, 1.0);
    std::vector<double> b(8), x(16);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);

    const auto got = affine_forward(x, w, b);

    // independent naive oracle
    for (std::size_t r = 0; r < 8; ++r) {
        double expect = b[r];
        for (std::size_t c = 0; c < 16; ++c) expect += w.at(r, c) * x[c];
        CHECK(got[r] == expect);
    }
}

TEST_CASE("affine_backward hand cases") {
    DenseMatrix w(1, 2);
    w.at(0, 0) = 1.0;
    w.at(0, 1) = 1.0;
    auto g = affine_backward(std::vector<double>{1.0}, std::vector<double>{2.0, 3.0}, w);
    CHECK(g.grad_weights.values == std::vector<double>{2.0, 3.0});
    CHECK(g.grad_bias == std::vector<double>{1.0});
    CHECK(g.grad_input == std::vector<double>{1.0, 1.0});

    auto gz = affine_backward(std::vector<double>{0.0}, std::vector<double>{2.0, 3.0}, w);
    CHECK(gz.grad_weights.values == std::vector<double>{0.0, 0.0});
    CHECK(gz.grad_bias == std::vector<double>{0.0});
    CHECK(gz.grad_input == std::vector<double>{0.0, 0.0});
}

TEST_CASE("affine_backward matches finite differences") {
    RngStream rng(7);
    DenseMatrix w(4, 6);
    for (auto& v : w.values) v = rng.uniform(-1.0, 1.0);
    std::vector<double> b(4), x(6), up(4);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : up) v = rng.uniform(-1.0, 1.0);

    const auto grads = affine_backward(up, x, w);

    // loss(x) = dot(up, affine(x))
    auto loss_of_input = [&](const std::vector<double>& xs) {
        const auto out = affine_forward(xs, w, b);
        double s = 0.0;
        for (std::size_t r = 0; r < out.size(); ++r) s += up[r] * out[r];
        return s;
    };
    CHECK(finite_diff_check(loss_of_input, x, grads.grad_input, 1e-4) < 1e-4);

    auto loss_of_weights = [&](const std::vector<double>& wv) {
        DenseMatrix w2 = w;
        w2.values = wv;
        const auto out = affine_forward(x, w2, b);
        double s = 0.0;
        for (std::size_t r = 0; r < out.size(); ++r) s += up[r] * out[r];
        return s;
    };
    CHECK(finite_diff_check(loss_of_weights, w.values, grads.grad_weights.values, 1e-4) < 1e-4);
}

TEST_CASE("adam first step moves by about -lr") {
    std::vector<double> p{0.0};
    AdamState st("p", 1, 0.001, 0.0);
    adam_step(p, std::vector<double>{1.0}, st);
    CHECK(std::abs(p[0] + 0.001) < 1e-6);
    CHECK(st.step == 1);
}

TEST_CASE("adam zero gradient leaves parameters untouched") {
    std::vector<double> p{0.7, -0.3};
    AdamState st("p", 2, 0.001, 0.0);
    adam_step(p, std::vector<double>{0.0, 0.0}, st);
    CHECK(p == std::vector<double>{0.7, -0.3});
}

TEST_CASE("adam lr=0 leaves parameters bit-identical") {
    std::vector<double> p{0.12345, -9.87};
    const auto before = p;
    AdamState st("p", 2, 0.0, 1e-6);
    adam_step(p, std::vector<double>{0.5, -2.0}, st);
    CHECK(p == before);
}

TEST_CASE("adam matches an independent scalar oracle over 10 steps") {
    // oracle: textbook Adam on f(x) = x^2 from x=1
    double x_ref = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> x{1.0};
    AdamState st("x", 1, lr, 0.0);
    st.eps = eps;

    for (int t = 1; t <= 10; ++t) {
        const double g = 2.0 * x_ref;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        x_ref -= lr * mh / (std::sqrt(vh) + eps);

        adam_step(x, std::vector<double>{2.0 * x[0]}, st);
        CHECK(x[0] == doctest::Approx(x_ref).epsilon(1e-12));
    }
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
    std::vector<double> p{0.0};
    AdamState st("embedding.3", 1, 0.001, 0.0);
    try {
        adam_step(p, std::vector<double>{std::nan("")}, st);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("embedding.3") != std::string::npos);
    }
}

TEST_CASE("sample_gumbel moments match Gumbel(0,1)") {
    RngStream rng(123);
    const std::size_t n = 1'000'000;
    const auto g = sample_gumbel(rng, n);

    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean - 0.5772156649) < 0.01);

    double var = 0.0;
    for (double v : g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    CHECK(std::abs(var - M_PI * M_PI / 6.0) < 0.02);
}

TEST_CASE("rng streams are reproducible") {
    RngStream a(99), b(99);
    const auto ga = sample_gumbel(a, 1000);
    const auto gb = sample_gumbel(b, 1000);
    CHECK(ga == gb);

    RngStream c(100);
    CHECK(sample_gumbel(c, 1000) != ga);
}

TEST_CASE("finite_diff_check calibration") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    CHECK(finite_diff_check(square, {3.0}, std::vector<double>{6.0}, 1e-4) < 1e-6);

    RngStream rng(5);
    std::vector<double> x(10), g(10);
    for (std::size_t i = 0; i < 10; ++i) {
        x[i] = rng.uniform(-2.0, 2.0);
        g[i] = 2.0 * x[i];
    }
    auto sum_sq = [](const std::vector<double>& xs) {
        double s = 0.0;
        for (double v : xs) s += v * v;
        return s;
    };
    CHECK(finite_diff_check(sum_sq, x, g, 1e-4) < 1e-5);

    // detector sanity: a wrong gradient cannot sneak through
    std::vector<double> halved(10), doubled(10);
    for (std::size_t i = 0; i < 10; ++i) {
        halved[i] = g[i] * 0.5;
        doubled[i] = g[i] * 2.0;
    }
    CHECK(finite_diff_check(sum_sq, x, halved, 1e-4) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(finite_diff_check(sum_sq, x, doubled, 1e-4) > 0.4);
}

TEST_CASE("init_fc stays within the fan-in bound") {
    RngStream rng(11);
    DenseMatrix w(16, 64);
    std::vector<double> b;
    init_fc(w, b, rng);
    const double bound = 1.0 / 8.0;
    for (double v : w.values) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
    }
    CHECK(b.size() == 16);
}
