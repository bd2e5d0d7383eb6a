#pragma once

// Reference computations written independently of the library internals.

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "zerodfl/learner.hpp"
#include "zerodfl/protocol.hpp"

namespace zerodfl::oracle {

/// Mean cross-entropy over `batch` via log-sum-exp, written from the
/// encoder definition: g = normalize(tanh(A [v_1; ...; v_M; token])),
/// f = normalize(W x), logits = <f, g> / tau.
inline double loss(const Eigen::MatrixXd& prompts, std::span<const Sample> batch, std::span<const ClassId> classes,
                   const SurrogateEncoder& enc, double tau) {
    const Eigen::Index d = prompts.rows();
    const Eigen::Index m = prompts.cols();
    std::vector<Eigen::VectorXd> text;
    for (ClassId q : classes) {
        Eigen::VectorXd x(d * (m + 1));
        for (Eigen::Index j = 0; j < m; ++j) x.segment(j * d, d) = prompts.col(j);
        x.segment(m * d, d) = enc.token(q);
        Eigen::VectorXd h = (enc.text_map() * x).array().tanh().matrix();
        text.push_back(h / h.norm());
    }
    double total = 0.0;
    for (const Sample& s : batch) {
        Eigen::VectorXd f = enc.image_map() * s.features;
        f /= f.norm();
        std::vector<double> logits;
        double label_logit = 0.0;
        for (std::size_t q = 0; q < classes.size(); ++q) {
            logits.push_back(f.dot(text[q]) / tau);
            if (classes[q] == s.label) label_logit = logits.back();
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double l : logits) sum += std::exp(l - mx);
        total += mx + std::log(sum) - label_logit;
    }
    return total / static_cast<double>(batch.size());
}

/// Central finite differences of `loss` with step h.
inline Eigen::MatrixXd fd_gradient(const Eigen::MatrixXd& prompts, std::span<const Sample> batch,
                                   std::span<const ClassId> classes, const SurrogateEncoder& enc, double tau,
                                   double h = 1e-5) {
    Eigen::MatrixXd grad(prompts.rows(), prompts.cols());
    Eigen::MatrixXd p = prompts;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double keep = p(i, j);
            p(i, j) = keep + h;
            const double up = loss(p, batch, classes, enc, tau);
            p(i, j) = keep - h;
            const double down = loss(p, batch, classes, enc, tau);
            p(i, j) = keep;
            grad(i, j) = (up - down) / (2 * h);
        }
    }
    return grad;
}

/// Largest coordinate-wise |a - b| / max(|a|, |b|, floor). The floor keeps
/// coordinates whose true value is numerically zero from dominating.
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double y = b.data()[i];
        worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
    return worst;
}

inline double coefficient_of_variation(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size())) / mean;
}

/// Receive counts after `rounds` rounds in which every client picks `s`
/// recipients, either with inverse-frequency weights or uniformly.
inline std::vector<double> receive_counts(std::size_t clients, int s, int rounds, std::uint64_t seed,
                                          bool weighted, double epsilon = 1e-6) {
    std::vector<SelectionHistory> histories;
    for (std::size_t i = 0; i < clients; ++i) histories.emplace_back(ClientId{i}, clients);
    std::vector<double> received(clients, 0.0);
    for (int r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < clients; ++i) {
            SelectionWeights w = compute_weights(histories[i], epsilon);
            if (!weighted) std::fill(w.weights.begin(), w.weights.end(), 1.0);
            RandomStream rng = derive_rng(seed, i, static_cast<std::uint64_t>(r), Purpose::kRecipientSelect);
            for (ClientId to : select_recipients(w, s, rng)) {
                histories[i].record(to);
                received[to.value] += 1.0;
            }
        }
    }
    return received;
}

}  // namespace zerodfl::oracle
