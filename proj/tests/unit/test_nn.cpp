#include "ftriage/common/error.hpp"
#include "ftriage/nn/adam.hpp"
#include "ftriage/nn/checkpoint.hpp"
#include "ftriage/nn/conv.hpp"
#include "ftriage/nn/loss.hpp"
#include "ftriage/nn/network.hpp"

#include "../oracles/gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace ftriage;
using namespace ftriage::nn;

namespace {

ArchitectureSpec small_arch() {
    ArchitectureSpec arch;
    arch.name = "tiny";
    arch.num_classes = 3;
    arch.input_shape = {2, 6, 6};
    arch.layers = {LayerSpec::conv(3, 4, 1, 1), LayerSpec::batchnorm(), LayerSpec::relu(), LayerSpec::maxpool(2),
                   LayerSpec::dense(5),         LayerSpec::relu(),      LayerSpec::dropout_layer(0.5),
                   LayerSpec::dense(3),         LayerSpec::softmax_output()};
    return arch;
}

template <typename Real>
BasicTensor<Real> random_batch(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    BasicTensor<Real> t(shape);
    for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

} // namespace

TEST_CASE("conv2d forward: scaling identity, bias-only and hand-computed averaging") {
    SUBCASE("1x1 kernel of 2 over ones") {
        const TensorD input({1, 1, 3, 3}, 1.0);
        const auto out = conv2d_infer(input, TensorD::from({1, 1, 1, 1}, {2.0}), TensorD({1}), 1, 0);
        CHECK(out.shape() == Shape{1, 1, 3, 3});
        for (double v : out.values()) CHECK(v == 2.0);
    }
    SUBCASE("zero weights yield the bias everywhere") {
        const auto input = random_batch<double>({2, 3, 5, 5}, 1);
        const auto out = conv2d_infer(input, TensorD({2, 3, 3, 3}), TensorD::from({2}, {0.75, -1.5}), 1, 1);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x) {
                    CHECK(out.at(b, 0, y, x) == 0.75);
                    CHECK(out.at(b, 1, y, x) == -1.5);
                }
    }
    SUBCASE("3x3 mean filter over a 0..15 ramp") {
        TensorD ramp({1, 1, 4, 4});
        for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
        const auto out = conv2d_infer(ramp, TensorD({1, 1, 3, 3}, 1.0 / 9.0), TensorD({1}), 1, 0);
        REQUIRE(out.shape() == Shape{1, 1, 2, 2});
        CHECK(out[0] == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(6.0).epsilon(1e-12));
        CHECK(out[2] == doctest::Approx(9.0).epsilon(1e-12));
        CHECK(out[3] == doctest::Approx(10.0).epsilon(1e-12));
    }
    SUBCASE("stride and padding give floor((H+2p-k)/s)+1") {
        const auto out = conv2d_infer(TensorD({1, 1, 7, 7}, 1.0), TensorD({1, 1, 3, 3}, 1.0), TensorD({1}), 2, 1);
        CHECK(out.shape() == Shape{1, 1, 4, 4});
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(conv2d_infer(TensorD({1, 2, 4, 4}), TensorD({1, 3, 3, 3}), TensorD({1}), 1, 0), ConfigError);
        CHECK_THROWS_AS(conv2d_infer(TensorD({1, 1, 2, 2}), TensorD({1, 1, 3, 3}), TensorD({1}), 1, 0), ConfigError);
        CHECK_THROWS_AS(conv2d_backward(Conv2dCache<double>{}, TensorD({1, 1, 1, 1})), UsageError);
    }
}

TEST_CASE("conv2d backward") {
    const auto input = random_batch<double>({2, 2, 5, 5}, 7);
    const auto weights = random_batch<double>({3, 2, 3, 3}, 8);
    const auto fwd = conv2d_forward(input, weights, TensorD({3}), 1, 1);

    SUBCASE("zero upstream gradient") {
        const auto g = conv2d_backward(fwd.cache, TensorD(fwd.output.shape()));
        for (double v : g.input.values()) CHECK(v == 0.0);
        for (double v : g.weights.values()) CHECK(v == 0.0);
        for (double v : g.bias.values()) CHECK(v == 0.0);
    }
    SUBCASE("bias gradient is the per-channel sum of grad_out") {
        const auto dy = random_batch<double>(fwd.output.shape(), 9);
        const auto g = conv2d_backward(fwd.cache, dy);
        for (std::size_t f = 0; f < 3; ++f) {
            double sum = 0.0;
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t y = 0; y < 5; ++y)
                    for (std::size_t x = 0; x < 5; ++x) sum += dy.at(b, f, y, x);
            CHECK(g.bias[f] == doctest::Approx(sum).epsilon(1e-12));
        }
    }
    SUBCASE("wrong grad shape") {
        CHECK_THROWS_AS(conv2d_backward(fwd.cache, TensorD({2, 3, 4, 4})), UsageError);
    }
    SUBCASE("finite differences, 1x2x5x5 input, 3 filters") {
        std::mt19937_64 rng(11);
        Rng init(3);
        Conv2dLayer<double> conv(LayerSpec::conv(3, 3, 1, 1), 2, init);
        const auto x = oracle::random_tensor({1, 2, 5, 5}, rng);
        CHECK(oracle::check_layer_gradients(conv, x, Mode::train, rng) < 1e-4);
    }
}

TEST_CASE("relu and maxpool examples") {
    Rng rng(0);
    ReluLayer<double> relu(LayerSpec::relu());
    const auto y = relu.forward(TensorD::from({1, 3}, {-1.0, 0.0, 2.0}), Mode::train, rng);
    CHECK(y == TensorD::from({1, 3}, {0.0, 0.0, 2.0}));
    CHECK(relu.backward(TensorD::from({1, 3}, {1.0, 1.0, 1.0})) == TensorD::from({1, 3}, {0.0, 0.0, 1.0}));

    MaxPoolLayer<double> pool(LayerSpec::maxpool(2));
    const auto p = pool.forward(TensorD::from({1, 1, 2, 2}, {1, 2, 3, 4}), Mode::train, rng);
    CHECK(p == TensorD::from({1, 1, 1, 1}, {4.0}));
    CHECK(pool.backward(TensorD::from({1, 1, 1, 1}, {2.5})) == TensorD::from({1, 1, 2, 2}, {0, 0, 0, 2.5}));

    // ties resolve to the first maximum in row-major order
    pool.forward(TensorD::from({1, 1, 2, 2}, {7, 7, 7, 7}), Mode::train, rng);
    CHECK(pool.backward(TensorD::from({1, 1, 1, 1}, {1.0})) == TensorD::from({1, 1, 2, 2}, {1, 0, 0, 0}));
}

TEST_CASE("batchnorm gradients and statistics") {
    std::mt19937_64 rng(5);
    BatchNormLayer<double> bn(LayerSpec::batchnorm(), 4);
    auto& gamma = bn.params()[0]->value;
    auto& beta = bn.params()[1]->value;
    gamma = oracle::random_tensor({4}, rng, 0.5, 1.5);
    beta = oracle::random_tensor({4}, rng);

    SUBCASE("train mode matches finite differences on 2x4x3x3") {
        const auto x = oracle::random_tensor({2, 4, 3, 3}, rng);
        CHECK(oracle::check_layer_gradients(bn, x, Mode::train, rng) < 1e-4);
    }
    SUBCASE("frozen statistics normalize with running values") {
        bn.set_track_statistics(false);
        const auto x = oracle::random_tensor({2, 4, 3, 3}, rng);
        CHECK(oracle::check_layer_gradients(bn, x, Mode::train, rng) < 1e-4);
        CHECK(bn.running_mean() == TensorD({4}));
    }
    SUBCASE("train mode normalizes per channel and updates running stats with momentum 0.1") {
        const auto x = oracle::random_tensor({3, 4, 2, 2}, rng, -2.0, 5.0);
        Rng r(0);
        bn.forward(x, Mode::train, r);
        for (std::size_t c = 0; c < 4; ++c) {
            double sum = 0.0;
            for (std::size_t b = 0; b < 3; ++b)
                for (std::size_t i = 0; i < 4; ++i) sum += x.at(b, c, i / 2, i % 2);
            CHECK(bn.running_mean()[c] == doctest::Approx(0.1 * sum / 12.0).epsilon(1e-12));
        }
    }
    SUBCASE("eval mode is pure") {
        const auto x = oracle::random_tensor({2, 4, 3, 3}, rng);
        const auto mean_before = bn.running_mean();
        Rng r(0);
        const auto a = bn.forward(x, Mode::eval, r);
        const auto b = bn.infer(x);
        CHECK(a == b);
        CHECK(bn.running_mean() == mean_before);
    }
}

TEST_CASE("softmax cross-entropy") {
    const int labels4[] = {3, 0, 9, 5};
    SUBCASE("uniform logits give ln K") {
        const auto r = softmax_xent(TensorD({4, 10}, 0.3), labels4);
        CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
        CHECK(std::log(10.0) == doctest::Approx(2.302585).epsilon(1e-6));
    }
    SUBCASE("dominant true logit drives the loss to zero") {
        TensorD logits({1, 10});
        logits[4] = 1e4;
        const int label[] = {4};
        CHECK(softmax_xent(logits, label).loss < 1e-12);
    }
    SUBCASE("finite differences on random 4x10 logits") {
        std::mt19937_64 rng(2);
        CHECK(oracle::check_softmax_xent(oracle::random_tensor({4, 10}, rng, -3, 3), {3, 0, 9, 5}) < 1e-5);
    }
    SUBCASE("label out of range") {
        const int bad[] = {0, 10, 1, 1};
        CHECK_THROWS_AS(softmax_xent(TensorD({4, 10}), bad), InputError);
    }
}

TEST_CASE("adam step") {
    SUBCASE("hand evaluation for a scalar") {
        Param<double> w("w", TensorD::from({1}, {1.0}));
        w.init_moments();
        w.grad[0] = 0.5;
        Param<double>* ps[] = {&w};
        adam_step<double>(ps, AdamHyper{}, 1);
        // m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25
        const double expected = 1.0 - 1e-3 * 0.5 / (std::sqrt(0.25) + 1e-8);
        CHECK(w.value[0] == doctest::Approx(expected).epsilon(1e-14));
        CHECK(w.value[0] == doctest::Approx(0.999).epsilon(1e-7));
    }
    SUBCASE("zero gradients leave values unchanged") {
        Param<float> w("w", random_batch<float>({4, 3}, 1));
        w.init_moments();
        const auto before = w.value;
        Param<float>* ps[] = {&w};
        for (std::size_t t = 1; t <= 5; ++t) adam_step<float>(ps, AdamHyper{}, t);
        CHECK(w.value == before);
    }
    SUBCASE("fully masked parameter is bitwise identical") {
        Param<float> w("w", random_batch<float>({4, 3}, 2));
        w.init_moments();
        w.freeze_all();
        const auto before = w.value;
        Param<float>* ps[] = {&w};
        for (std::size_t t = 1; t <= 50; ++t) {
            w.grad = random_batch<float>({4, 3}, 100 + t);
            adam_step<float>(ps, AdamHyper{}, t);
        }
        CHECK(bitwise_equal(w.value, before));
        CHECK(w.adam_m == Tensor({4, 3}));
        CHECK(w.adam_v == Tensor({4, 3}));
    }
    SUBCASE("masking is per output channel") {
        Param<float> w("w", random_batch<float>({3, 2}, 3));
        w.init_moments();
        w.set_channel_mask({true, false, true});
        const auto before = w.value;
        w.grad = Tensor({3, 2}, 1.0f);
        Param<float>* ps[] = {&w};
        adam_step<float>(ps, AdamHyper{}, 1);
        CHECK(w.value[2] == before[2]);
        CHECK(w.value[3] == before[3]);
        CHECK(w.value[0] != before[0]);
        CHECK(w.value[5] != before[5]);
        CHECK(w.trainable_count() == 4);
    }
    SUBCASE("errors") {
        Param<float> w("w", Tensor({2}));
        Param<float>* ps[] = {&w};
        CHECK_THROWS_AS(adam_step<float>(ps, AdamHyper{}, 1), UsageError);
        w.init_moments();
        CHECK_THROWS_AS(adam_step<float>(ps, AdamHyper{}, 0), UsageError);
        CHECK_THROWS_AS(w.set_channel_mask({true}), ConfigError);
        AdamHyper bad;
        bad.beta1 = 1.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("layer spec validation") {
    CHECK_THROWS_AS(LayerSpec::conv(0, 4).validate(), ConfigError);
    CHECK_THROWS_AS(LayerSpec::dropout_layer(1.0).validate(), ConfigError);
    CHECK_THROWS_AS(layer_kind_from_string("lstm"), ConfigError);
    CHECK(layer_kind_from_string("global-avg-pool") == LayerKind::global_avg_pool);
}

TEST_CASE("network construction, determinism and eval purity") {
    const Network a(small_arch(), 42);
    const Network b(small_arch(), 42);
    const Network c(small_arch(), 43);
    CHECK(save_checkpoint(a) == save_checkpoint(b));
    CHECK(save_checkpoint(a) != save_checkpoint(c));
    CHECK(a.conv_layer_names() == std::vector<std::string>{"conv1"});
    CHECK(a.index_of("fc2") == 7);
    CHECK_THROWS_AS(a.index_of("conv9"), UsageError);

    Network net = a;
    const auto x = random_batch<float>({4, 2, 6, 6}, 3);
    const auto before = save_checkpoint(net);
    Rng rng(1);
    const auto y1 = net.forward(x, Mode::eval, rng);
    const auto y2 = net.infer(x);
    CHECK(y1 == y2);
    CHECK(save_checkpoint(net) == before);

    ArchitectureSpec broken = small_arch();
    broken.num_classes = 4;
    CHECK_THROWS_AS(Network(broken, 0), ConfigError);
}

TEST_CASE("mask freeze property under random training trajectories") {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 5; ++trial) {
        Network net(small_arch(), gen());
        net.init_moments();
        std::vector<std::vector<bool>> masks;
        for (auto* p : net.params()) {
            std::vector<bool> flags(p->channels());
            for (std::size_t c = 0; c < flags.size(); ++c) flags[c] = (gen() & 1) != 0;
            p->set_channel_mask(flags);
        }
        std::vector<Tensor> before;
        for (auto* p : net.params()) before.push_back(p->value);
        Rng rng(gen());
        const auto x = random_batch<float>({8, 2, 6, 6}, gen());
        const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
        for (std::size_t t = 1; t <= 10; ++t) {
            const auto logits = net.forward(x, Mode::train, rng);
            const auto loss = softmax_xent(logits, labels);
            net.backward(loss.grad);
            auto params = net.params();
            adam_step<float>(params, AdamHyper{.learning_rate = 0.05}, t);
        }
        const auto params = net.params();
        for (std::size_t k = 0; k < params.size(); ++k) {
            const auto* p = params[k];
            for (std::size_t c = 0; c < p->channels(); ++c) {
                if (p->channel_trainable(c)) continue;
                const std::size_t block = p->channel_block();
                CHECK(std::memcmp(p->value.data() + c * block, before[k].data() + c * block, block * sizeof(float)) == 0);
            }
        }
    }
}

TEST_CASE("checkpoint roundtrip and format errors") {
    Network net(small_arch(), 5);
    // perturb running statistics so buffers are part of the roundtrip
    Rng rng(2);
    net.forward(random_batch<float>({4, 2, 6, 6}, 4), Mode::train, rng);
    const std::string bytes = save_checkpoint(net);
    const Network loaded = load_checkpoint<float>(bytes);
    CHECK(save_checkpoint(loaded) == bytes);
    CHECK(loaded.architecture() == net.architecture());
    const auto x = random_batch<float>({3, 2, 6, 6}, 6);
    CHECK(loaded.infer(x) == net.infer(x));

    CHECK_THROWS_AS(load_checkpoint<float>(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(load_checkpoint<float>(bytes.substr(0, 10)), FormatError);
    CHECK_THROWS_AS(load_checkpoint<double>(bytes), FormatError);
    CHECK_THROWS_AS(load_checkpoint<float>(bytes + "x"), FormatError);

    std::string wrong_version = bytes;
    wrong_version[4] = 9;
    try {
        load_checkpoint<float>(wrong_version);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(load_checkpoint<float>(bad_magic), FormatError);
}
