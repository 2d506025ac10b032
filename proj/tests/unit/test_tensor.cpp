#include <doctest.h>

#include <cmath>
#include <random>

#include "capgen/tensor.hpp"
#include "oracles.hpp"

using namespace capgen;
using oracle::check_gradients;
using oracle::random_tensor;

namespace {

constexpr Real kOpTolerance = 1e-4;

std::vector<Real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Weighted sum so every output entry gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor w = random_tensor(y.shape(), rng, 1.0, false);
    return sum(mul(y, w));
}

}  // namespace

TEST_CASE("matmul forward") {
    const Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Tensor b = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(values(matmul(id, b)) == values(b));
    const Tensor r = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r.at(0) == 11);
    CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, std::vector<Real>(6)), Tensor::matrix(2, 3, std::vector<Real>(6))),
                    std::invalid_argument);
}

TEST_CASE("softmax stability and symmetry") {
    const Tensor s = softmax(Tensor::vector({0, 0, 0}), 0);
    for (Real v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const Tensor big = softmax(Tensor::vector({1000, 0}), 0);
    CHECK(std::isfinite(big.at(0)));
    CHECK(big.at(0) == doctest::Approx(1.0));
    CHECK(big.at(1) >= 0);
    const Tensor ls = log_softmax(Tensor::vector({1000, 0}), 0);
    CHECK(ls.at(0) == doctest::Approx(0.0));
    CHECK(ls.at(1) == doctest::Approx(-1000.0));
}

TEST_CASE("gradient reversal contract") {
    const Tensor x = Tensor::vector({1.5, -2.0}, true);
    {
        Tape tape;
        const Tensor y = grad_reverse(x, 1.0);
        CHECK(values(y) == std::vector<Real>{1.5, -2.0});
        tape.backward(sum(mul(y, Tensor::vector({0.3, -0.7}))));
    }
    CHECK(x.grad()[0] == -0.3);
    CHECK(x.grad()[1] == 0.7);

    Tensor z = Tensor::vector({0.1, 2.0, -3.0}, true);
    {
        Tape tape;
        tape.backward(sum(grad_reverse(z, 2.0)));
    }
    for (Real g : z.grad()) CHECK(g == -2.0);
    CHECK_THROWS_AS(grad_reverse(z, -1.0), std::invalid_argument);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::vector({1, 2}, true);
    {
        Tape tape;
        tape.backward(sum(mul(x, x)));
    }
    CHECK(values(Tensor::vector({x.grad()[0], x.grad()[1]})) == std::vector<Real>{2, 4});

    x.zero_grad();
    {
        Tape tape;
        const Tensor c = add(scale(sum(x), 0.0), Tensor::scalar(3.0));
        tape.backward(c);
    }
    for (Real g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("tape refuses a second backward") {
    Tensor x = Tensor::vector({1, 2}, true);
    Tape tape;
    const Tensor loss = sum(x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
    tape.reset();
    tape.backward(sum(x));
    CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("no recording without a tape or without grad inputs") {
    Tensor x = Tensor::vector({1, 2}, true);
    const Tensor c = Tensor::vector({3, 4});
    Tape tape;
    (void)add(c, c);
    CHECK(tape.recorded() == 0);
    (void)add(x, c);
    CHECK(tape.recorded() == 1);
}

TEST_CASE("loss gradient of itself is one") {
    Tensor x = Tensor::scalar(2.0, true);
    Tape tape;
    const Tensor loss = mul(x, x);
    tape.backward(loss);
    CHECK(loss.grad()[0] == 1.0);
}

TEST_CASE("shape errors name the shapes") {
    try {
        (void)add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
    }
}

TEST_CASE("finite differences: every op") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed);
        Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({3, 4}, rng);
        Tensor bias = random_tensor({4}, rng), gain = random_tensor({4}, rng), lnb = random_tensor({4}, rng);
        Tensor table = random_tensor({5, 3}, rng), v = random_tensor({6}, rng);
        const std::vector<int> ids{4, 0, 2, 2};

        CHECK(check_gradients([&] { return probe(matmul(a, b), seed); }, {a, b}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(transpose(a), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(add(a, c), seed); }, {a, c}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(sub(a, c), seed); }, {a, c}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(mul(a, c), seed); }, {a, c}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(scale(a, -1.7), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(add_row(a, bias), seed); }, {a, bias}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(relu(a), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(sigmoid(a), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(softmax(a, 1), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(softmax(a, 0), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(log_softmax(a, 1), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(layer_norm(a, gain, lnb, 1e-5), seed); }, {a, gain, lnb}).worst <
              kOpTolerance);
        CHECK(check_gradients(
                  [&] {
                      const Tensor parts[] = {a, c};
                      return probe(concat(parts, 0), seed);
                  },
                  {a, c})
                  .worst < kOpTolerance);
        CHECK(check_gradients(
                  [&] {
                      const Tensor parts[] = {a, c};
                      return probe(concat(parts, 1), seed);
                  },
                  {a, c})
                  .worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(slice(a, 1, 1, 3), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(slice(a, 0, 1, 2), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(reshape(a, {2, 6}), seed); }, {a}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(embed_lookup(table, ids), seed); }, {table}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return mul(sum(v), mean(v)); }, {v}).worst < kOpTolerance);
        CHECK(check_gradients([&] { return probe(mean_rows(a), seed); }, {a}).worst < kOpTolerance);
    }
}

TEST_CASE("grad_reverse gradient is the negated identity gradient, scaled") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({2, 3}, rng);
    auto grad_of = [&](Real lambda, bool reversed) {
        x.zero_grad();
        {
            Tape tape;
            const Tensor y = reversed ? grad_reverse(x, lambda) : x;
            tape.backward(probe(sigmoid(y), 9));
        }
        return std::vector<Real>(x.grad().begin(), x.grad().end());
    };
    const auto plain = grad_of(1.0, false);
    for (Real lambda : {0.0, 0.5, 1.0, 2.0}) {
        const auto rev = grad_of(lambda, true);
        for (std::size_t i = 0; i < plain.size(); ++i) CHECK(rev[i] == -lambda * plain[i]);
    }
}

TEST_CASE("dropout: rate zero is identity, training scales survivors") {
    std::mt19937_64 rng(1);
    const Tensor x = Tensor::filled({100}, 1.0);
    CHECK(values(dropout(x, 0.0, rng)) == values(x));
    const Tensor y = dropout(x, 0.5, rng);
    for (Real v : y.data()) CHECK((v == 0.0 || v == 2.0));
}
