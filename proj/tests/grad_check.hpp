#pragma once

// Finite-difference gradient harness. Analytic gradients come from the tsg
// tape; expected gradients come from central differences of the refm
// double-precision oracle evaluated at the same (float-rounded) inputs.

#include <functional>
#include <string>
#include <vector>

#include "ref_math.hpp"
#include "tsg/rng.hpp"
#include "tsg/tensor.hpp"

namespace gradcheck {

using refm::dvec;

struct OpReport {
    std::string op;
    int trials = 0;
    double max_rel_err = 0.0;
};

// One randomly-shaped trial of an op: the builders close over the shapes.
struct Instance {
    std::vector<tsg::Shape> shapes;
    std::function<float(tsg::Rng&, size_t input_idx)> gen;  // value generator per input
    std::function<tsg::Tensor(const std::vector<tsg::Tensor>&)> tsg_fn;
    std::function<dvec(const std::vector<dvec>&)> ref_fn;
};

inline float default_gen(tsg::Rng& rng, size_t) { return static_cast<float>(rng.uniform(-2.0, 2.0)); }

// Runs `trials` random instances of one op and reports the worst relative
// error, normalized by the max-magnitude entry of the reference gradient.
inline OpReport check_op(const std::string& name, tsg::Rng& rng, int trials,
                         const std::function<Instance(tsg::Rng&)>& make_instance) {
    OpReport report{name, trials, 0.0};
    for (int t = 0; t < trials; ++t) {
        Instance inst = make_instance(rng);
        if (!inst.gen) inst.gen = default_gen;

        std::vector<tsg::Tensor> inputs;
        std::vector<dvec> inputs_d;
        for (size_t ii = 0; ii < inst.shapes.size(); ++ii) {
            const int64_t n = tsg::numel(inst.shapes[ii]);
            std::vector<float> vals(static_cast<size_t>(n));
            for (float& v : vals) v = inst.gen(rng, ii);
            inputs.push_back(tsg::Tensor::from(inst.shapes[ii], vals, true));
            inputs_d.emplace_back(vals.begin(), vals.end());
        }

        std::vector<std::vector<float>> analytic;
        std::vector<float> probe;
        {
            tsg::Tape tape;
            tsg::Tensor out = inst.tsg_fn(inputs);
            probe.resize(static_cast<size_t>(out.size()));
            for (float& v : probe) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            tsg::Tensor w = tsg::Tensor::from(out.shape(), probe);
            tsg::Tensor loss = tsg::sum_all(tsg::mul(out, w));
            tape.backward(loss);
            for (auto& in : inputs) {
                std::span<const float> g = in.grad();
                analytic.emplace_back(g.begin(), g.end());
                if (analytic.back().empty()) analytic.back().assign(static_cast<size_t>(in.size()), 0.0f);
            }
        }

        for (size_t ii = 0; ii < inputs.size(); ++ii) {
            auto f = [&](const dvec& x) {
                std::vector<dvec> args = inputs_d;
                args[ii] = x;
                const dvec out = inst.ref_fn(args);
                double acc = 0.0;
                for (size_t k = 0; k < out.size(); ++k) acc += out[k] * probe[k];
                return acc;
            };
            const dvec fd = refm::finite_diff(f, inputs_d[ii]);
            double max_fd = 0.0;
            for (double g : fd) max_fd = std::max(max_fd, std::abs(g));
            const double denom = std::max(max_fd, 1e-6);
            for (size_t k = 0; k < fd.size(); ++k) {
                const double err = std::abs(fd[k] - static_cast<double>(analytic[ii][k])) / denom;
                report.max_rel_err = std::max(report.max_rel_err, err);
            }
        }
    }
    return report;
}

// The full per-op sweep used by both the unit tests and acceptance criterion 1.
std::vector<OpReport> run_all_op_checks(uint64_t seed, int trials);

}  // namespace gradcheck
