#include <cmath>
#include <doctest.h>

#include "ihas/errors.hpp"
#include "ihas/recommender.hpp"

using namespace ihas;

namespace {

RecommenderModel tiny_model(std::uint64_t seed, std::vector<std::size_t> vocab = {5, 7, 4},
                            std::vector<std::size_t> dims = {3, 3, 3}) {
    RngStream rng(seed);
    return make_recommender("base", vocab, dims, 6, 4, 0.01, 0.0, rng);
}

std::vector<EncodedSample> tiny_batch() {
    return {
        {{0, 2, 1}, 1},
        {{4, 0, 3}, 0},
        {{1, 6, 0}, 1},
        {{0, 2, 3}, 0},
    };
}

} // namespace

TEST_CASE("embed_lookup concatenates per-field columns") {
    EmbeddingTable t;
    t.dims = {1};
    t.tables.push_back(DenseMatrix(1, 2));
    t.tables[0].at(0, 0) = 0.7;
    t.tables[0].at(0, 1) = -0.2;

    const auto e = embed_lookup(EncodedSample{{0}, 0}, t);
    CHECK(e == std::vector<double>{0.7});

    CHECK_THROWS_AS(embed_lookup(EncodedSample{{5}, 0}, t), DataError);
}

TEST_CASE("embedding width is N*d for uniform tables") {
    RngStream rng(2);
    std::vector<std::size_t> vocab(22, 30), dims(22, 16);
    const auto m = make_recommender("base", vocab, dims, 16, 8, 0.001, 0.0, rng);
    EncodedSample s;
    s.field_indices.assign(22, 3);
    CHECK(embed_lookup(s, m.tables).size() == 352);
}

TEST_CASE("embed_lookup equals explicit one-hot matrix multiplication") {
    const auto m = tiny_model(5);
    EncodedSample s{{2, 6, 1}, 0};
    const auto e = embed_lookup(s, m.tables);

    std::vector<double> oracle;
    for (std::size_t f = 0; f < 3; ++f) {
        const auto& table = m.tables.tables[f];
        std::vector<double> onehot(table.cols, 0.0);
        onehot[s.field_indices[f]] = 1.0;
        for (std::size_t r = 0; r < table.rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < table.cols; ++c) acc += table.at(r, c) * onehot[c];
            oracle.push_back(acc);
        }
    }
    CHECK(e == oracle);
}

TEST_CASE("apply_mask gates coordinates exactly") {
    const std::vector<double> e{1.0, -2.0, 3.0};
    CHECK(apply_mask(e, MaskBits{1, 1, 1}) == e);
    CHECK(apply_mask(e, MaskBits{0, 0, 0}) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(apply_mask(e, MaskBits{1, 0, 1}) == std::vector<double>{1.0, 0.0, 3.0});
    CHECK_THROWS_AS(apply_mask(e, MaskBits{1, 0}), ShapeError);
}

TEST_CASE("forward is 0.5 under all-zero parameters and stays in (0,1)") {
    auto m = tiny_model(6);
    for (auto& t : m.tables.tables)
        for (auto& v : t.values) v = 0.0;
    for (auto* w : {&m.mlp.w1, &m.mlp.w2, &m.mlp.w3})
        for (auto& v : w->values) v = 0.0;
    for (auto* b : {&m.mlp.b1, &m.mlp.b2, &m.mlp.b3})
        for (auto& v : *b) v = 0.0;

    const auto e = embed_lookup(EncodedSample{{0, 0, 0}, 0}, m.tables);
    CHECK(forward(m, e) == 0.5);

    const auto m2 = tiny_model(7);
    RngStream rng(8);
    for (int i = 0; i < 20; ++i) {
        std::vector<double> x(m2.input_dim());
        for (auto& v : x) v = rng.uniform(-3.0, 3.0);
        const double p = forward(m2, x);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("forward matches a naive layer-by-layer oracle") {
    const auto m = tiny_model(9);
    RngStream rng(10);
    std::vector<double> x(m.input_dim());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);

    // independent composition
    auto relu = [](std::vector<double> v) {
        for (auto& a : v) a = a > 0 ? a : 0.0;
        return v;
    };
    const auto h1 = relu(affine_forward(x, m.mlp.w1, m.mlp.b1));
    const auto h2 = relu(affine_forward(h1, m.mlp.w2, m.mlp.b2));
    const auto out = affine_forward(h2, m.mlp.w3, m.mlp.b3);
    const double expect = 1.0 / (1.0 + std::exp(-out[0]));

    CHECK(forward(m, x) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("bce_loss hand values") {
    CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(1.0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bce_loss(0.0, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bce_loss(0.9, 1) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("train_step drives a separable toy batch to near-zero loss") {
    auto m = tiny_model(5, {2, 2, 2}, {2, 2, 2});
    const std::vector<EncodedSample> batch{{{0, 0, 0}, 1}, {{1, 1, 1}, 0}};

    double loss = 1.0;
    for (int step = 0; step < 500 && loss >= 0.01; ++step) loss = train_step(m, batch, {});
    CHECK(loss < 0.01);
}

TEST_CASE("train_step with lr=0 changes nothing") {
    RngStream rng(12);
    auto m = make_recommender("base", {5, 7, 4}, {3, 3, 3}, 6, 4, 0.0, 0.0, rng);
    const auto w1 = m.mlp.w1.values;
    const auto t0 = m.tables.tables[0].values;
    const auto batch = tiny_batch();
    train_step(m, batch, {});
    CHECK(m.mlp.w1.values == w1);
    CHECK(m.tables.tables[0].values == t0);
}

TEST_CASE("batch gradients pass finite differences for every tensor") {
    const auto model = tiny_model(13);
    const auto batch = tiny_batch();
    const std::vector<MaskBits> masks(batch.size(), MaskBits(model.input_dim(), 1));

    const auto grads = compute_batch_gradients(model, batch, masks);

    auto loss_with = [&](const RecommenderModel& m) {
        double s = 0.0;
        for (const auto& sample : batch)
            s += bce_loss(forward(m, embed_lookup(sample, m.tables)), sample.label);
        return s / static_cast<double>(batch.size());
    };

    SUBCASE("mlp tensors") {
        struct Slot {
            std::vector<double>* values;
            const std::vector<double>* grad;
        };
        auto m = model;
        const std::vector<Slot> slots{
            {&m.mlp.w1.values, &grads.gw1.values}, {&m.mlp.b1, &grads.gb1},
            {&m.mlp.w2.values, &grads.gw2.values}, {&m.mlp.b2, &grads.gb2},
            {&m.mlp.w3.values, &grads.gw3.values}, {&m.mlp.b3, &grads.gb3},
        };
        for (const auto& slot : slots) {
            auto loss_fn = [&](const std::vector<double>& v) {
                *slot.values = v;
                return loss_with(m);
            };
            const auto base = *slot.values;
            CHECK(finite_diff_check(loss_fn, base, *slot.grad, 1e-5) < 1e-4);
            *slot.values = base;
        }
    }

    SUBCASE("embedding tables, touched columns only") {
        auto m = model;
        for (std::size_t f = 0; f < 3; ++f) {
            // dense gradient view of the sparse column map
            std::vector<double> dense(m.tables.tables[f].size(), 0.0);
            for (const auto& [cat, col] : grads.embedding[f])
                for (std::size_t r = 0; r < col.size(); ++r)
                    dense[r * m.tables.tables[f].cols + cat] = col[r];

            auto loss_fn = [&](const std::vector<double>& v) {
                m.tables.tables[f].values = v;
                return loss_with(m);
            };
            const auto base = m.tables.tables[f].values;
            CHECK(finite_diff_check(loss_fn, base, dense, 1e-5) < 1e-4);
            m.tables.tables[f].values = base;
        }
    }
}

TEST_CASE("closed gates receive exactly zero gradient") {
    const auto model = tiny_model(14);
    const auto batch = tiny_batch();

    MaskBits mask(model.input_dim(), 1);
    mask[0] = 0; // first coordinate of field 0
    mask[3] = 0;
    mask[4] = 0;
    mask[5] = 0; // all of field 1
    const std::vector<MaskBits> masks(batch.size(), mask);

    const auto grads = compute_batch_gradients(model, batch, masks);

    for (const auto& [cat, col] : grads.embedding[0]) CHECK(col[0] == 0.0);
    CHECK(grads.embedding[1].empty()); // fully closed field is never touched
    (void)grads;
}

TEST_CASE("train_step touches only embedding rows referenced by the batch") {
    auto m = tiny_model(15);
    const auto before = m.tables.tables[0];

    const std::vector<EncodedSample> batch{{{0, 2, 1}, 1}, {{0, 3, 2}, 0}};
    train_step(m, batch, {});

    // field 0: only category 0 appears in the batch
    for (std::size_t c = 1; c < before.cols; ++c)
        for (std::size_t r = 0; r < before.rows; ++r)
            CHECK(m.tables.tables[0].at(r, c) == before.at(r, c));
    // and category 0 moved
    bool moved = false;
    for (std::size_t r = 0; r < before.rows; ++r)
        moved = moved || m.tables.tables[0].at(r, 0) != before.at(r, 0);
    CHECK(moved);
}

TEST_CASE("auc hand cases and pairwise oracle") {
    CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<std::uint8_t>{1, 0, 1}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}),
                    MetricError);

    // 200 scores with deliberate ties vs the O(n^2) pairwise count
    RngStream rng(16);
    std::vector<double> scores(200);
    std::vector<std::uint8_t> labels(200);
    for (std::size_t i = 0; i < 200; ++i) {
        scores[i] = std::round(rng.uniform() * 20.0) / 20.0;
        labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < 200; ++i)
        for (std::size_t j = 0; j < 200; ++j) {
            if (!(labels[i] == 1 && labels[j] == 0)) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    CHECK(auc(scores, labels) == doctest::Approx(wins / pairs).epsilon(1e-12));
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
    RngStream rng(17);
    std::vector<double> scores(150);
    std::vector<std::uint8_t> labels(150);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = rng.uniform(-2.0, 2.0);
        labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    auto transformed = scores;
    for (auto& s : transformed) s = std::exp(3.0 * s) + 7.0;
    CHECK(auc(scores, labels) == doctest::Approx(auc(transformed, labels)).epsilon(1e-12));
}

TEST_CASE("logloss equals the mean of per-sample bce") {
    const std::vector<double> scores{0.5, 0.5, 0.5};
    const std::vector<std::uint8_t> labels{1, 0, 1};
    CHECK(logloss(scores, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const std::vector<double> perfect{1.0, 0.0};
    const std::vector<std::uint8_t> pl{1, 0};
    CHECK(logloss(perfect, pl) == doctest::Approx(0.0).epsilon(1e-9));

    RngStream rng(18);
    std::vector<double> s(50);
    std::vector<std::uint8_t> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        s[i] = rng.uniform(0.01, 0.99);
        y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += bce_loss(s[i], y[i]);
    mean /= 50.0;
    CHECK(logloss(s, y) == mean);

    CHECK_THROWS_AS(logloss(std::vector<double>{}, std::vector<std::uint8_t>{}), MetricError);
}
