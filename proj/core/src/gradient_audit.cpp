// Copyright 2026 The ocsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "ocsd/gradcheck.hpp"
#include "ocsd/network.hpp"
#include "ocsd/rng.hpp"

namespace ocsd {

namespace {

using D = double;
using Inputs = std::vector<Tensor<D>>;

Tensor<D> uniform(Rng& rng, Shape s, double lo, double hi) {
  Tensor<D> t(s);
  for (std::int64_t k = 0; k < t.numel(); ++k) t[k] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Values at least 0.1 away from zero.
Tensor<D> away_from_zero(Rng& rng, Shape s) {
  Tensor<D> t(s);
  for (std::int64_t k = 0; k < t.numel(); ++k) {
    const double mag = 0.1 + rng.uniform();
    t[k] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Distinct values spaced 0.05 apart, shuffled.
Tensor<D> spaced(Rng& rng, Shape s) {
  Tensor<D> t(s);
  for (std::int64_t k = 0; k < t.numel(); ++k) t[k] = 0.05 * static_cast<double>(k) - 1.0;
  for (std::int64_t k = t.numel(); k > 1; --k) {
    std::swap(t[k - 1], t[static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(k)))]);
  }
  return t;
}

// Checkerboard of high and low values: every neighbour difference is at
// least 1 and no pixel has a zero total-variation gradient.
Tensor<D> checker(Rng& rng, Shape s) {
  Tensor<D> t(s);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
          const double mag = 0.5 + 0.5 * rng.uniform();
          t.at(n, c, y, x) = (x + y) % 2 == 0 ? mag : -mag;
        }
  return t;
}

// Projects an op output onto fixed random weights so each output element
// carries a distinct upstream gradient.
Var<D> project(Tape<D>& tape, const Var<D>& y, std::uint64_t seed) {
  Rng rng(seed);
  return tape.sum(tape.mul(y, tape.constant(uniform(rng, y.shape(), -1.0, 1.0))));
}

struct Case {
  const char* name;
  std::function<Inputs(Rng&)> make;
  ScalarFunction<D> f;
};

std::vector<Case> op_cases(std::uint64_t proj_seed) {
  std::vector<Case> cases;
  cases.push_back({"conv3x3",
                   [](Rng& r) {
                     return Inputs{uniform(r, {2, 3, 5, 6}, -1, 1), uniform(r, {4, 3, 3, 3}, -1, 1),
                                   uniform(r, {1, 4, 1, 1}, -1, 1)};
                   },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.conv3x3(v[0], v[1], v[2]), proj_seed);
                   }});
  cases.push_back({"conv1x1",
                   [](Rng& r) {
                     return Inputs{uniform(r, {2, 3, 4, 5}, -1, 1), uniform(r, {4, 3, 1, 1}, -1, 1),
                                   uniform(r, {1, 4, 1, 1}, -1, 1)};
                   },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.conv1x1(v[0], v[1], v[2]), proj_seed);
                   }});
  cases.push_back({"maxpool2x2", [](Rng& r) { return Inputs{spaced(r, {1, 2, 6, 6})}; },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.maxpool2x2(v[0]), proj_seed);
                   }});
  cases.push_back({"upsample2x", [](Rng& r) { return Inputs{uniform(r, {1, 2, 3, 5}, -1, 1)}; },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.upsample2x(v[0]), proj_seed);
                   }});
  cases.push_back({"resize_down4",
                   [](Rng& r) { return Inputs{uniform(r, {1, 2, 16, 12}, -1, 1)}; },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.resize_bilinear(v[0], 4, 3), proj_seed);
                   }});
  cases.push_back({"relu", [](Rng& r) { return Inputs{away_from_zero(r, {2, 2, 4, 4})}; },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.relu(v[0]), proj_seed);
                   }});
  cases.push_back({"add",
                   [](Rng& r) {
                     return Inputs{uniform(r, {1, 2, 3, 4}, -1, 1), uniform(r, {1, 2, 3, 4}, -1, 1)};
                   },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.add(v[0], v[1]), proj_seed);
                   }});
  cases.push_back({"mul",
                   [](Rng& r) {
                     return Inputs{uniform(r, {1, 2, 3, 4}, -1, 1), uniform(r, {1, 2, 3, 4}, -1, 1)};
                   },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.mul(v[0], v[1]), proj_seed);
                   }});
  cases.push_back({"scale", [](Rng& r) { return Inputs{uniform(r, {1, 2, 3, 4}, -1, 1)}; },
                   [=](Tape<D>& t, std::span<const Var<D>> v) {
                     return project(t, t.scale(v[0], -1.7), proj_seed);
                   }});
  cases.push_back({"sum", [](Rng& r) { return Inputs{uniform(r, {2, 3, 4, 5}, -1, 1)}; },
                   [](Tape<D>& t, std::span<const Var<D>> v) { return t.sum(v[0]); }});
  cases.push_back({"mse",
                   [](Rng& r) {
                     return Inputs{uniform(r, {2, 1, 4, 4}, 0, 1), uniform(r, {2, 1, 4, 4}, 0, 1)};
                   },
                   [](Tape<D>& t, std::span<const Var<D>> v) { return t.mse(v[0], v[1]); }});
  cases.push_back({"total_variation", [](Rng& r) { return Inputs{checker(r, {2, 1, 5, 6})}; },
                   [](Tape<D>& t, std::span<const Var<D>> v) { return t.total_variation(v[0]); }});
  return cases;
}

}  // namespace

GradCheckResult network_gradient_check(const NetworkConfig& config,
                                       const NetworkGradCheckOptions& options) {
  NetworkConfig cfg = config;
  cfg.seed = options.seed;
  const NetworkParams<double> init = init_params<double>(cfg);
  Rng rng(derive_seed(options.seed, {0x6772616463686bULL}));
  const Shape s{1, cfg.input_channels, options.size, options.size};
  Tensor<double> input = uniform(rng, s, 0.05, 1.0);
  Tensor<double> target = uniform(rng, s, 0.05, 1.0);

  // The point of evaluation, rounded to float when the analytic side is 32-bit.
  NetworkParams<double> point = init;
  if (options.single_precision) {
    point = init.cast<float>().cast<double>();
    input = input.cast<float>().cast<double>();
    target = target.cast<float>().cast<double>();
  }

  std::vector<Tensor<double>> grads;
  if (options.single_precision) {
    const NetworkParams<float> pf = point.cast<float>();
    Tape<float> tape;
    if (options.fault) tape.inject_fault(options.fault->first, static_cast<float>(options.fault->second));
    Network<float> net(tape, pf, true);
    const Var<float> loss =
        tape.mse(net.forward(tape.constant(input.cast<float>())), tape.constant(target.cast<float>()));
    tape.backward(loss);
    for (const auto& v : net.parameters()) grads.push_back(v.grad().cast<double>());
  } else {
    Tape<double> tape;
    if (options.fault) tape.inject_fault(options.fault->first, options.fault->second);
    Network<double> net(tape, point, true);
    const Var<double> loss = tape.mse(net.forward(tape.constant(input)), tape.constant(target));
    tape.backward(loss);
    for (const auto& v : net.parameters()) grads.push_back(v.grad());
  }

  struct Eval {
    double loss;
    std::uint64_t signature;
  };
  auto loss_at = [&](const NetworkParams<double>& p) {
    Tape<double> tape;
    tape.track_branches(true);
    Network<double> net(tape, p, false);
    const double loss =
        tape.mse(net.forward(tape.constant(input)), tape.constant(target)).value().item();
    return Eval{loss, tape.branch_signature()};
  };
  const std::uint64_t base = loss_at(point).signature;

  const auto total = static_cast<std::uint64_t>(point.scalar_count());
  const std::size_t wanted = std::min<std::uint64_t>(options.coordinates, total);
  std::vector<std::uint64_t> tried;
  GradCheckResult result;
  NetworkParams<double> probe = point;
  while (result.coordinates < wanted) {
    if (tried.size() >= total || tried.size() >= 100 * wanted) {
      throw std::runtime_error("network_gradient_check: too few smooth coordinates");
    }
    const std::uint64_t c = rng.below(total);
    if (std::find(tried.begin(), tried.end(), c) != tried.end()) continue;
    tried.push_back(c);
    std::size_t i = 0;
    auto k = static_cast<std::int64_t>(c);
    while (k >= probe.tensor(i).numel()) k -= probe.tensor(i++).numel();
    const double saved = probe.tensor(i)[k];
    probe.tensor(i)[k] = saved + options.eps;
    const Eval up = loss_at(probe);
    probe.tensor(i)[k] = saved - options.eps;
    const Eval down = loss_at(probe);
    probe.tensor(i)[k] = saved;
    if (up.signature != base || down.signature != base) {
      ++result.skipped;
      continue;
    }
    ++result.coordinates;
    const double numeric = (up.loss - down.loss) / (2.0 * options.eps);
    const double analytic = grads[i][k];
    const double rel =
        std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = i;
      result.worst_index = k;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

std::vector<GradCheckCase> run_gradient_audit(const GradAuditOptions& options) {
  if (options.seeds < 1) throw std::invalid_argument("gradient audit needs >= 1 seed");
  std::vector<GradCheckCase> out;
  const std::vector<Case> names = op_cases(0);
  for (std::size_t c = 0; c < names.size(); ++c) {
    GradCheckCase gc{names[c].name, 0.0, options.tolerance};
    for (int s = 0; s < options.seeds; ++s) {
      const std::uint64_t seed =
          derive_seed(options.base_seed, {static_cast<std::uint64_t>(s), c});
      const Case cs = op_cases(derive_seed(seed, {1}))[c];
      Rng rng(seed);
      const Inputs inputs = cs.make(rng);
      GradCheckOptions go;
      go.eps = options.eps;
      go.fault = options.fault;
      const GradCheckResult r =
          finite_diff_check<D>(cs.f, std::span<const Tensor<D>>(inputs), go);
      gc.max_rel_error = std::max(gc.max_rel_error, r.max_rel_error);
    }
    out.push_back(gc);
  }
  if (options.include_network) {
    GradCheckCase gc{"network_tiny", 0.0, options.tolerance};
    for (int s = 0; s < options.seeds; ++s) {
      NetworkGradCheckOptions no;
      no.eps = options.eps;
      no.seed = derive_seed(options.base_seed, {static_cast<std::uint64_t>(s), 0x6e6574ULL});
      no.fault = options.fault;
      gc.max_rel_error =
          std::max(gc.max_rel_error, network_gradient_check(NetworkConfig::tiny(), no).max_rel_error);
    }
    out.push_back(gc);
  }
  return out;
}

}  // namespace ocsd
