#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "deforma/autodiff.hpp"
#include "deforma/mlp.hpp"
#include "deforma/oracle.hpp"

using namespace deforma;

TEST(Autodiff, SquareAtThree) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Var x = tape.variable(3.0);
  const Var y = x * x;
  EXPECT_EQ(tape.backward(y)[x], 6.0);
}

TEST(Autodiff, ConstantHasZeroGradient) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Var x = tape.variable(1.5);
  const Var c = Var(4.0) * Var(2.0);  // folded, never recorded
  EXPECT_FALSE(c.recorded());
  const Var y = x * 0.0 + c;
  EXPECT_EQ(tape.backward(y)[x], 0.0);
  EXPECT_EQ(tape.backward(c)[x], 0.0);
}

TEST(Autodiff, UnrecordedValueIsRejected) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Var x = tape.variable(2.0);
  const Var y = sin(x);
  const auto adj = tape.backward(y);
  EXPECT_THROW((void)adj[Var(2.0)], InvalidArgument);

  ad::Tape other;
  const Var foreign = other.variable(1.0);
  EXPECT_THROW((void)adj[foreign], InvalidArgument);
}

TEST(Autodiff, NoActiveTapeIsAnError) { EXPECT_THROW(ad::Tape::require_active(), std::exception); }

TEST(Autodiff, ElementaryDerivativesMatchCentralDifferences) {
  using Fn = std::function<Var(const Var&)>;
  using Fd = std::function<double(double)>;
  const std::vector<std::pair<Fn, Fd>> ops = {
      {[](const Var& a) { return sin(a); }, [](double a) { return std::sin(a); }},
      {[](const Var& a) { return cos(a); }, [](double a) { return std::cos(a); }},
      {[](const Var& a) { return exp(a); }, [](double a) { return std::exp(a); }},
      {[](const Var& a) { return log(a); }, [](double a) { return std::log(a); }},
      {[](const Var& a) { return sqrt(a); }, [](double a) { return std::sqrt(a); }},
      {[](const Var& a) { return tanh(a); }, [](double a) { return std::tanh(a); }},
      {[](const Var& a) { return sigmoid(a); }, [](double a) { return 1.0 / (1.0 + std::exp(-a)); }},
      {[](const Var& a) { return softplus(a); }, [](double a) { return std::log1p(std::exp(a)); }},
      {[](const Var& a) { return silu(a); }, [](double a) { return a / (1.0 + std::exp(-a)); }},
      {[](const Var& a) { return silu_prime(a); }, [](double a) { return deforma::silu_prime(a); }},
      {[](const Var& a) { return a / (a * a + 1.0); }, [](double a) { return a / (a * a + 1.0); }},
  };
  for (double x0 : {0.3, 1.7, 2.9}) {
    for (const auto& [fv, fd] : ops) {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      const Var x = tape.variable(x0);
      const double g = tape.backward(fv(x))[x];
      const double ref = oracle::fd_gradient([&](std::span<const double> v) { return fd(v[0]); },
                                             std::vector<double>{x0})[0];
      EXPECT_NEAR(g, ref, 1e-7 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(Autodiff, SharedSubexpressionsAccumulate) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Var x = tape.variable(2.0);
  const Var y = tape.variable(-1.0);
  const Var u = x * y;
  const Var f = u * u + u * x;  // x^2 y^2 + x^2 y
  const auto adj = tape.backward(f);
  EXPECT_DOUBLE_EQ(adj[x], 2 * 2.0 * 1.0 + 2 * 2.0 * -1.0);
  EXPECT_DOUBLE_EQ(adj[y], 2 * 4.0 * -1.0 + 4.0);
}

TEST(Mlp, RecordedForwardMatchesPlainForwardAndGradients) {
  const Mlp net(MlpShape{5, {7, 6}, 3, false});
  std::mt19937_64 rng(11);
  const std::vector<double> params = net.init(rng, false);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> in(5 * 4);
  for (double& v : in) v = g(rng);
  const std::vector<double> plain = net.forward(params, in, 4);

  std::vector<double> grads(params.size(), 0.0);
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const std::vector<Var> xin = tape.variables(in);
  const std::vector<Var> out = net.forward(ParamView{params, grads}, xin, 4);
  ASSERT_EQ(out.size(), plain.size());
  Var sum(0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_NEAR(out[i].value(), plain[i], 1e-13);
    sum = sum + out[i] * static_cast<double>(i % 3 + 1);
  }
  const auto adj = tape.backward(sum);
  auto f = [&](std::span<const double> p) {
    const auto o = net.forward(p, in, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * static_cast<double>(i % 3 + 1);
    return s;
  };
  const auto fd = oracle::fd_gradient(f, params);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_NEAR(grads[i], fd[i], 1e-7) << i;
  auto fx = [&](std::span<const double> x) {
    const auto o = net.forward(params, x, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * static_cast<double>(i % 3 + 1);
    return s;
  };
  const auto fdx = oracle::fd_gradient(fx, in);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NEAR(adj[xin[i]], fdx[i], 1e-7) << i;
}

TEST(Mlp, RejectsWrongSizes) {
  const Mlp net(MlpShape{2, {3}, 1, false});
  const std::vector<double> p(net.param_count(), 0.1);
  EXPECT_THROW(net.forward(std::vector<double>(3, 0.0), std::vector<double>{1, 2}, 1), InvalidArgument);
  EXPECT_THROW(net.forward(p, std::vector<double>{1, 2, 3}, 1), InvalidArgument);
}
