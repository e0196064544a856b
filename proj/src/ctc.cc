// ctc.cc

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "hierctc/ctc.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hierctc {

namespace {

void check_posterior_shape(const Tensor& lp, const char* op) {
  if (lp.rank() != 2 || lp.cols() < 2)
    throw std::invalid_argument(std::string(op) +
                                ": log posteriors must be T x C with C >= 2, got " +
                                shape_str(lp.shape()));
}

void check_target(const TokenSeq& target, int cols, const char* op) {
  for (int y : target) {
    if (y <= 0 || y >= cols)
      throw std::invalid_argument(std::string(op) + ": target token " +
                                  std::to_string(y) + " outside vocabulary (1.." +
                                  std::to_string(cols - 1) + ")");
  }
}

}  // namespace

TokenSeq collapse(const TokenSeq& frames) {
  TokenSeq out;
  int prev = -1;
  for (int f : frames) {
    if (f != prev && f != kBlankId) out.push_back(f);
    prev = f;
  }
  return out;
}

int min_frames(const TokenSeq& target) {
  int required = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++required;
  return required;
}

CtcLossResult ctc_loss(const Tensor& log_posteriors, const TokenSeq& target) {
  check_posterior_shape(log_posteriors, "ctc_loss");
  check_target(target, log_posteriors.cols(), "ctc_loss");

  const int T = log_posteriors.rows();
  const int C = log_posteriors.cols();
  const int S = static_cast<int>(target.size());
  const auto& lp = log_posteriors.data();

  CtcLossResult result;
  result.posterior = log_posteriors;

  if (T < min_frames(target)) {
    result.neg_log_prob =
        Tensor::full({1}, std::numeric_limits<double>::infinity());
    result.achievable = false;
    return result;
  }

  // Extended label sequence: blank, y1, blank, y2, ..., yS, blank.
  const int E = 2 * S + 1;
  auto ext = [&](int s) { return (s % 2 == 0) ? kBlankId : target[s / 2]; };
  auto at = [&](int t, int k) { return lp[static_cast<size_t>(t) * C + k]; };

  std::vector<double> alpha(static_cast<size_t>(T) * E, kLogZero);
  alpha[0] = at(0, kBlankId);
  if (S > 0) alpha[1] = at(0, ext(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < E; ++s) {
      double a = alpha[static_cast<size_t>(t - 1) * E + s];
      if (s >= 1) a = log_sum_exp(a, alpha[static_cast<size_t>(t - 1) * E + s - 1]);
      if (s >= 2 && ext(s) != kBlankId && ext(s) != ext(s - 2))
        a = log_sum_exp(a, alpha[static_cast<size_t>(t - 1) * E + s - 2]);
      alpha[static_cast<size_t>(t) * E + s] =
          (a == kLogZero) ? kLogZero : a + at(t, ext(s));
    }
  }

  double log_p = alpha[static_cast<size_t>(T - 1) * E + E - 1];
  if (S > 0)
    log_p = log_sum_exp(log_p, alpha[static_cast<size_t>(T - 1) * E + E - 2]);

  if (log_p == kLogZero) {
    // Structurally achievable but probability zero (some required token
    // has -inf log-posterior everywhere): treat like unachievable.
    result.neg_log_prob =
        Tensor::full({1}, std::numeric_limits<double>::infinity());
    result.achievable = false;
    return result;
  }

  // Beta recursion, emission included at t, mirroring alpha.
  std::vector<double> beta(static_cast<size_t>(T) * E, kLogZero);
  beta[static_cast<size_t>(T - 1) * E + E - 1] = at(T - 1, kBlankId);
  if (S > 0) beta[static_cast<size_t>(T - 1) * E + E - 2] = at(T - 1, ext(E - 2));
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < E; ++s) {
      double b = beta[static_cast<size_t>(t + 1) * E + s];
      if (s + 1 < E) b = log_sum_exp(b, beta[static_cast<size_t>(t + 1) * E + s + 1]);
      if (s + 2 < E && ext(s + 2) != kBlankId && ext(s + 2) != ext(s))
        b = log_sum_exp(b, beta[static_cast<size_t>(t + 1) * E + s + 2]);
      beta[static_cast<size_t>(t) * E + s] =
          (b == kLogZero) ? kLogZero : b + at(t, ext(s));
    }
  }

  // dL/d lp[t][k] = -sum_{s: ext(s)=k} exp(alpha + beta - lp - logP).
  // alpha and beta both include the emission at t, hence the -lp term.
  std::vector<double> grad_table(static_cast<size_t>(T) * C, 0.0);
  for (int t = 0; t < T; ++t) {
    std::vector<double> acc(C, kLogZero);
    for (int s = 0; s < E; ++s) {
      const double ab = alpha[static_cast<size_t>(t) * E + s] +
                        beta[static_cast<size_t>(t) * E + s];
      if (ab == kLogZero) continue;
      acc[ext(s)] = log_sum_exp(acc[ext(s)], ab);
    }
    for (int k = 0; k < C; ++k) {
      if (acc[k] == kLogZero) continue;
      grad_table[static_cast<size_t>(t) * C + k] =
          -std::exp(acc[k] - at(t, k) - log_p);
    }
  }

  auto node = std::make_shared<TensorNode>();
  node->shape = {1};
  node->data = {-log_p};
  node->parents = {log_posteriors.node()};
  node->needs_grad =
      log_posteriors.node()->needs_grad || log_posteriors.node()->is_param;
  node->backward_fn = [grad_table = std::move(grad_table)](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->needs_grad) return;
    p->ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < grad_table.size(); ++i)
      p->grad[i] += g * grad_table[i];
  };
  result.neg_log_prob = Tensor(node);
  return result;
}

double ctc_brute_force(const Tensor& log_posteriors, const TokenSeq& target) {
  check_posterior_shape(log_posteriors, "ctc_brute_force");
  check_target(target, log_posteriors.cols(), "ctc_brute_force");
  const int T = log_posteriors.rows();
  const int C = log_posteriors.cols();
  if (T > 8 || C - 1 > 4)
    throw std::invalid_argument(
        "ctc_brute_force: instance exceeds enumeration bound (T <= 8, |V| <= 4), "
        "got T=" + std::to_string(T) + " |V|=" + std::to_string(C - 1));

  std::vector<double> probs(log_posteriors.data().size());
  for (size_t i = 0; i < probs.size(); ++i)
    probs[i] = std::exp(log_posteriors.data()[i]);

  TokenSeq frames(T, 0);
  double total = 0.0;
  while (true) {
    double p = 1.0;
    for (int t = 0; t < T; ++t) p *= probs[static_cast<size_t>(t) * C + frames[t]];
    if (p > 0.0 && collapse(frames) == target) total += p;
    int t = T - 1;
    while (t >= 0 && frames[t] == C - 1) frames[t--] = 0;
    if (t < 0) break;
    ++frames[t];
  }
  if (total <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

TokenSeq ctc_greedy_decode(const Tensor& log_posteriors) {
  check_posterior_shape(log_posteriors, "ctc_greedy_decode");
  const int T = log_posteriors.rows();
  const int C = log_posteriors.cols();
  TokenSeq best(T, 0);
  for (int t = 0; t < T; ++t) {
    int arg = 0;
    double mx = log_posteriors.data()[static_cast<size_t>(t) * C];
    for (int k = 1; k < C; ++k) {
      const double v = log_posteriors.data()[static_cast<size_t>(t) * C + k];
      if (v > mx) {
        mx = v;
        arg = k;
      }
    }
    best[t] = arg;
  }
  return collapse(best);
}

}  // namespace hierctc
