#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cdasim/nn/adam.hpp"
#include "cdasim/nn/model_io.hpp"
#include "cdasim/nn/network.hpp"
#include "cdasim/nn/train.hpp"
#include "cdasim/selftest.hpp"

using namespace cdasim;
using namespace cdasim::nn;

namespace {

// Straightforward reference cell, written independently of the library's cached version.
void reference_step(const LstmParams& p, const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c) {
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    std::vector<double> gate[4];
    for (int g = 0; g < 4; ++g) {
        gate[g].assign(kHidden, 0.0);
        for (std::size_t r = 0; r < kHidden; ++r) {
            double z = p.bias[g][r];
            for (std::size_t k = 0; k < kInputs; ++k) z += p.wx[g](r, k) * x[k];
            for (std::size_t k = 0; k < kHidden; ++k) z += p.wh[g](r, k) * h[k];
            gate[g][r] = g == kCandidate ? std::tanh(z) : sig(z);
        }
    }
    for (std::size_t r = 0; r < kHidden; ++r) {
        c[r] = gate[kForgetGate][r] * c[r] + gate[kInputGate][r] * gate[kCandidate][r];
        h[r] = gate[kOutputGate][r] * std::tanh(c[r]);
    }
}

double reference_forward(const ModelParams& m, const std::vector<InputVector>& window) {
    std::vector<double> h(kHidden, 0.0), c(kHidden, 0.0);
    for (const auto& x : window) reference_step(m.lstm, std::vector<double>(x.begin(), x.end()), h, c);
    std::vector<double> a = h;
    for (int l = 0; l < 3; ++l) {
        const auto& d = m.dense[l];
        std::vector<double> out(d.w.rows);
        for (std::size_t r = 0; r < d.w.rows; ++r) {
            double z = d.b[r];
            for (std::size_t k = 0; k < d.w.cols; ++k) z += d.w(r, k) * a[k];
            out[r] = l < 2 ? std::max(0.0, z) : z;
        }
        a = out;
    }
    return a[0];
}

std::vector<InputVector> random_window(Rng& rng, int len) {
    std::vector<InputVector> w(static_cast<std::size_t>(len));
    for (auto& x : w)
        for (double& v : x) v = uniform_real(rng, 0.0, 1.0);
    return w;
}

}  // namespace

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
    const auto m = zero_model();
    std::vector<double> x(kInputs, 0.7), h(kHidden, 0.3), c(kHidden, 0.0);
    const auto out = lstm_step(m.lstm, x, h, c);
    for (double v : out.h) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Lstm, HiddenStaysInOpenUnitInterval) {
    Rng rng(3);
    const auto m = init_model(3);
    std::vector<double> x(kInputs), h(kHidden, 0.0), c(kHidden, 0.0);
    for (int step = 0; step < 200; ++step) {
        for (double& v : x) v = uniform_real(rng, -50, 50);
        auto out = lstm_step(m.lstm, x, h, c);
        for (double v : out.h) {
            ASSERT_GT(v, -1.0);
            ASSERT_LT(v, 1.0);
        }
        h.assign(out.h.begin(), out.h.end());
        c.assign(out.c.begin(), out.c.end());
    }
}

TEST(Lstm, MatchesReferenceImplementation) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = init_model(100 + static_cast<std::uint64_t>(trial));
        std::vector<double> x(kInputs), h(kHidden), c(kHidden);
        for (double& v : x) v = uniform_real(rng, -1, 1);
        for (double& v : h) v = uniform_real(rng, -1, 1);
        for (double& v : c) v = uniform_real(rng, -2, 2);
        const auto got = lstm_step(m.lstm, x, h, c);
        reference_step(m.lstm, x, h, c);
        for (std::size_t r = 0; r < kHidden; ++r) {
            EXPECT_NEAR(got.h[r], h[r], 1e-12);
            EXPECT_NEAR(got.c[r], c[r], 1e-12);
        }
    }
}

TEST(Lstm, RejectsWrongShapes) {
    const auto m = zero_model();
    std::vector<double> x(12), h(kHidden), c(kHidden);
    EXPECT_THROW(lstm_step(m.lstm, x, h, c), std::invalid_argument);
}

TEST(Forward, ZeroModelAndConstantHead) {
    Rng rng(1);
    auto m = zero_model();
    const auto w = random_window(rng, 1);
    EXPECT_DOUBLE_EQ(forward(m, w), 0.0);
    m = init_model(9);
    std::fill(m.dense[2].w.data.begin(), m.dense[2].w.data.end(), 0.0);
    m.dense[2].b[0] = 0.42;
    EXPECT_DOUBLE_EQ(forward(m, w), 0.42);
}

TEST(Forward, HeadIsLinear) {
    Rng rng(2);
    auto m = init_model(4);
    for (auto& b : m.dense[1].b) b = 0.3;  // keep the penultimate layer active
    const auto w = random_window(rng, 1);
    const double y = forward(m, w);
    for (double& v : m.dense[2].w.data) v *= 2.0;
    m.dense[2].b[0] *= 2.0;
    EXPECT_NEAR(forward(m, w), 2.0 * y, 1e-12);
}

TEST(Forward, MatchesReferenceOverWindows) {
    Rng rng(6);
    for (int len : {1, 2, 5}) {
        const auto m = init_model(50 + static_cast<std::uint64_t>(len), len);
        const auto w = random_window(rng, len);
        EXPECT_NEAR(forward(m, w), reference_forward(m, w), 1e-12);
    }
}

TEST(Forward, RejectsWrongWindowLength) {
    Rng rng(1);
    const auto m = init_model(1, 3);
    EXPECT_THROW(forward(m, random_window(rng, 2)), std::invalid_argument);
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) EXPECT_LT(gradient_check_error(seed), 1e-4) << "seed " << seed;
}

TEST(Backward, ZeroErrorGivesZeroGradient) {
    Rng rng(3);
    const auto m = init_model(3, 2);
    const auto w = random_window(rng, 2);
    std::vector<Sample> batch = {{w, forward(m, w)}};
    const auto g = backward(m, batch);
    EXPECT_DOUBLE_EQ(g.mse, 0.0);
    for (double v : flatten(g.grad)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Backward, DuplicatedSampleSameGradient) {
    Rng rng(4);
    const auto m = init_model(4, 2);
    const auto w = random_window(rng, 2);
    std::vector<Sample> one = {{w, 0.3}};
    std::vector<Sample> many(5, Sample{w, 0.3});
    const auto a = flatten(backward(m, one).grad);
    const auto b = flatten(backward(m, many).grad);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * std::max(1.0, std::abs(a[i])));
}

TEST(Backward, MseMatchesBatchMse) {
    Rng rng(5);
    const auto m = init_model(5);
    std::vector<std::vector<InputVector>> ws;
    std::vector<Sample> batch;
    for (int i = 0; i < 6; ++i) ws.push_back(random_window(rng, 1));
    for (auto& w : ws) batch.push_back({w, uniform_real(rng, 0, 1)});
    EXPECT_NEAR(backward(m, batch).mse, batch_mse(m, batch), 1e-15);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    AdamState s;
    std::vector<double> p = {1.0, -2.0};
    std::vector<double> g = {0.0, 0.0};
    adam_update(s, p, g);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
    AdamState s;
    s.learning_rate = 0.01;
    std::vector<double> p = {0.0};
    std::vector<double> g = {3.7};
    adam_update(s, p, g);
    EXPECT_NEAR(p[0], -0.01, 1e-9);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
    AdamState s;
    s.learning_rate = 0.1;
    std::vector<double> w = {0.0};
    for (int i = 0; i < 200; ++i) {
        std::vector<double> g = {2.0 * (w[0] - 3.0)};
        adam_update(s, w, g);
    }
    EXPECT_LT(std::abs(w[0] - 3.0), 0.05);
}

TEST(Init, ForgetBiasAndDeterminism) {
    const auto a = init_model(11);
    const auto b = init_model(11);
    EXPECT_EQ(a, b);
    EXPECT_NE(flatten(a), flatten(init_model(12)));
    for (double v : a.lstm.bias[kForgetGate]) EXPECT_DOUBLE_EQ(v, 1.0);
    EXPECT_EQ(parameter_count(a), 4u * (kHidden * kInputs + kHidden * kHidden + kHidden) + 55 + 18 + 4);
}

namespace {

Dataset constant_dataset(std::size_t rows, double price, NormStats& stats) {
    std::vector<FeatureRecord> recs(rows);
    Rng rng(1);
    for (std::size_t i = 0; i < rows; ++i) {
        RecordVector a;
        for (double& v : a) v = uniform_real(rng, 0, 100);
        a[kTargetField] = price;
        recs[i] = FeatureRecord::from_array(a);
    }
    stats = fit_norm_stats(recs);
    stats.min[kTargetField] = 0;
    stats.max[kTargetField] = 200;
    Dataset d(1);
    d.add_session(recs, stats);
    return d;
}

}  // namespace

TEST(Train, LearnsAConstant) {
    NormStats stats;
    const auto data = constant_dataset(256, 130, stats);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 20;
    const auto r = train(data, stats, cfg);
    ASSERT_EQ(r.epoch_loss.size(), 20u);
    EXPECT_LE(r.epoch_loss.back(), 1e-6);
    EXPECT_LE(r.epoch_loss.back(), 0.5 * r.epoch_loss.front());
    EXPECT_EQ(r.model.norm, stats);
}

TEST(Train, DeterministicPerSeed) {
    NormStats stats;
    const auto data = constant_dataset(100, 90, stats);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 3;
    cfg.seed = 5;
    EXPECT_EQ(train(data, stats, cfg).model, train(data, stats, cfg).model);
}

TEST(Train, SequenceWindowsStayInsideSessions) {
    std::vector<FeatureRecord> s1(3), s2(2);
    NormStats stats;
    stats.max.fill(1.0);
    Dataset d(3);
    d.add_session(s1, stats);
    d.add_session(s2, stats);
    EXPECT_EQ(d.size(), 1u);
    EXPECT_EQ(d.sample(0).window.size(), 3u);
}

TEST(Train, RejectsBadConfig) {
    NormStats stats;
    const auto data = constant_dataset(10, 90, stats);
    TrainConfig cfg;
    cfg.seq_len = 2;
    EXPECT_THROW(train(data, stats, cfg), std::invalid_argument);
    EXPECT_THROW(train(Dataset(1), stats, TrainConfig{}), std::invalid_argument);
}

TEST(ModelIo, SaveLoadSaveIsByteIdentical) {
    auto m = init_model(21, 2);
    for (std::size_t i = 0; i < kRecordFields; ++i) {
        m.norm.min[i] = static_cast<double>(i) / 7.0;
        m.norm.max[i] = 100.0 + static_cast<double>(i) / 3.0;
    }
    std::stringstream a;
    save_model(m, a);
    const auto loaded = load_model(a);
    EXPECT_EQ(loaded, m);
    std::stringstream b;
    save_model(loaded, b);
    EXPECT_EQ(a.str(), b.str());

    Rng rng(2);
    const auto w = random_window(rng, 2);
    EXPECT_EQ(forward(loaded, w), forward(m, w));
}

TEST(ModelIo, RejectsWrongLstmShape) {
    std::stringstream ss;
    save_model(init_model(1), ss);
    std::string text = ss.str();
    text.replace(text.find("LSTM 10 13"), 10, "LSTM 9 13");
    std::istringstream in(text);
    EXPECT_THROW(load_model(in, "bad.dtx"), ModelShapeError);
}

TEST(ModelIo, RejectsMissingHeaderWithLine) {
    std::istringstream in("NOTAMODEL\n");
    try {
        load_model(in, "x");
        FAIL();
    } catch (const util::ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST(ModelIo, RejectsTruncatedFile) {
    std::stringstream ss;
    save_model(init_model(1), ss);
    std::string text = ss.str();
    std::istringstream in(text.substr(0, text.size() / 2));
    EXPECT_THROW(load_model(in), util::ParseError);
}
