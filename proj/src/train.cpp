#include "hicenhance/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "hicenhance/autodiff.hpp"
#include "hicenhance/errors.hpp"

namespace hicenhance::train {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (!(lr >= 0.0)) throw std::invalid_argument("train config: learning rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: momentum decays must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be > 0");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (grad_clip < 0.0 || weight_decay < 0.0)
        throw std::invalid_argument("train config: clip and decay must be >= 0");
}

OptimizerState OptimizerState::make(const std::vector<ad::ParamRef>& params) {
    OptimizerState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const ad::ParamRef& p : params) {
        st.m.emplace_back(p.value->shape);
        st.v.emplace_back(p.value->shape);
    }
    return st;
}

double l1_value(const Tensor& pred, const Tensor& target) {
    if (pred.shape != target.shape)
        throw std::invalid_argument("l1: prediction and target shapes differ");
    if (pred.v.empty()) throw std::invalid_argument("l1: empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) s += std::abs(pred.v[i] - target.v[i]);
    return s / static_cast<double>(pred.v.size());
}

void adam_step(const std::vector<ad::ParamRef>& params, OptimizerState& state,
               const TrainConfig& cfg) {
    if (params.size() != state.m.size())
        throw std::invalid_argument("adam: state does not match the parameter registry");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    double clip_scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const ad::ParamRef& p : params)
            for (double g : p.grad->v) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        Tensor& w = *params[i].value;
        const Tensor& g = *params[i].grad;
        for (std::size_t k = 0; k < w.v.size(); ++k) {
            const double gk = g.v[k] * clip_scale;
            m.v[k] = cfg.beta1 * m.v[k] + (1.0 - cfg.beta1) * gk;
            v.v[k] = cfg.beta2 * v.v[k] + (1.0 - cfg.beta2) * gk * gk;
            const double mhat = m.v[k] / bc1;
            const double vhat = v.v[k] / bc2;
            w.v[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (cfg.weight_decay > 0.0) w.v[k] -= cfg.lr * cfg.weight_decay * w.v[k];
        }
    }
}

namespace {

int sample_side(const Dataset& data) {
    const Tensor& t = data.front().input;
    if (t.rank() != 2 || t.dim(0) != t.dim(1))
        throw std::invalid_argument("train: samples must be square rank-2 patches");
    return t.dim(0);
}

Tensor gather_batch(const Dataset& data, const std::vector<int>& order, std::size_t first,
                    std::size_t count, bool targets) {
    const int side = data[static_cast<std::size_t>(order[first])].input.dim(0);
    Tensor out({static_cast<int>(count), 1, side, side});
    for (std::size_t b = 0; b < count; ++b) {
        const Sample& s = data[static_cast<std::size_t>(order[first + b])];
        const Tensor& src = targets ? s.target : s.input;
        if (src.rank() != 2 || src.dim(0) != side || src.dim(1) != side)
            throw std::invalid_argument("train: inconsistent patch shapes in the dataset");
        std::memcpy(out.data() + b * src.v.size(), src.v.data(), src.v.size() * sizeof(double));
    }
    return out;
}

std::vector<int> identity_order(std::size_t n) {
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    return order;
}

}  // namespace

double evaluate_l1(model::Model& m, const Dataset& data, int batch_size) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const auto order = identity_order(data.size());
    double abs_sum = 0.0;
    std::size_t pixels = 0;
    for (std::size_t first = 0; first < data.size();
         first += static_cast<std::size_t>(batch_size)) {
        const std::size_t count =
            std::min(static_cast<std::size_t>(batch_size), data.size() - first);
        const Tensor input = gather_batch(data, order, first, count, false);
        const Tensor target = gather_batch(data, order, first, count, true);
        ad::Tape t;
        const model::ForwardPass fp = m.forward(t, input);
        const Tensor& pred = t.val(fp.output);
        for (std::size_t i = 0; i < pred.v.size(); ++i)
            abs_sum += std::abs(pred.v[i] - target.v[i]);
        pixels += pred.v.size();
    }
    return abs_sum / static_cast<double>(pixels);
}

void apply_snapshot(model::Model& m, const std::vector<Tensor>& snapshot) {
    const auto params = m.params();
    if (params.size() != snapshot.size())
        throw std::invalid_argument("snapshot does not match the parameter registry");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].value->shape != snapshot[i].shape)
            throw std::invalid_argument("snapshot shape mismatch for " + params[i].name);
        *params[i].value = snapshot[i];
    }
}

TrainResult train(model::Model& m, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    Dataset filtered;
    const Dataset* data = &train_set;
    if (cfg.drop_zero_targets) {
        for (const Sample& s : train_set) {
            bool all_zero = true;
            for (double v : s.target.v) all_zero = all_zero && v == 0.0;
            if (!all_zero) filtered.push_back(s);
        }
        data = &filtered;
    }
    if (data->empty()) throw std::invalid_argument("train: empty training set");
    if (m.cfg.side != sample_side(*data))
        throw std::invalid_argument("train: patch side does not match the model");

    const auto params = m.params();
    OptimizerState state = OptimizerState::make(params);
    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order = identity_order(data->size());

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double abs_sum = 0.0;  // sample-weighted so shuffling cannot move the epoch mean
        for (std::size_t first = 0; first < data->size();
             first += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(cfg.batch_size), data->size() - first);
            const Tensor input = gather_batch(*data, order, first, count, false);
            const Tensor target = gather_batch(*data, order, first, count, true);

            ad::Tape t;
            const model::ForwardPass fp = m.forward(t, input);
            const int loss_id = ad::l1_loss(t, fp.output, target);
            const double loss = t.val(loss_id).v[0];
            if (!std::isfinite(loss))
                throw NumericError(
                    "train: non-finite loss at step " + std::to_string(state.step + 1) +
                    " (epoch " + std::to_string(epoch) + ", batch starting at sample " +
                    std::to_string(first) + ")");
            abs_sum += loss * static_cast<double>(count);

            m.zero_grads();
            t.backward(loss_id);
            adam_step(params, state, cfg);
        }
        const double train_l1 = abs_sum / static_cast<double>(data->size());
        const double val_l1 =
            val_set.empty() ? train_l1 : evaluate_l1(m, val_set, cfg.batch_size);
        result.history.push_back({state.step, epoch, train_l1, val_l1});

        if (val_l1 < result.best_val) {
            result.best_val = val_l1;
            result.best_epoch = epoch;
            result.best_params.clear();
            for (const ad::ParamRef& p : params) result.best_params.push_back(*p.value);
            if (!checkpoint_path.empty()) m.save(checkpoint_path);
        }
        if (cfg.checkpoint_every > 0 && !checkpoint_path.empty() &&
            epoch % cfg.checkpoint_every == 0)
            m.save(checkpoint_path + ".latest");
    }
    return result;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        auto shortest = [](double v) {  // shortest digits that round-trip
            char buf[32];
            const auto res = std::to_chars(buf, buf + sizeof(buf), v);
            return std::string(buf, res.ptr);
        };
        f << "step,train_l1,val_l1\n";
        for (const HistoryRow& r : history)
            f << r.step << ',' << shortest(r.train_l1) << ',' << shortest(r.val_l1) << '\n';
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

GradCheckReport grad_check(model::Model& m, const Tensor& input, const Tensor& target,
                           double fd_step, double floor) {
    if (input.rank() != 2) throw std::invalid_argument("grad check: input must be [side,side]");
    Tensor batched({1, 1, input.dim(0), input.dim(1)});
    batched.v = input.v;
    Tensor target4({1, 1, target.dim(0), target.dim(1)});
    target4.v = target.v;

    const auto params = m.params();

    // Analytic pass.
    std::vector<Tensor> analytic;
    {
        ad::Tape t;
        const model::ForwardPass fp = m.forward(t, batched);
        const int loss_id = ad::l1_loss(t, fp.output, target4);
        m.zero_grads();
        t.backward(loss_id);
        for (const ad::ParamRef& p : params) analytic.push_back(*p.grad);
    }

    auto loss_at = [&]() {
        ad::Tape t;
        const model::ForwardPass fp = m.forward(t, batched);
        return t.val(ad::l1_loss(t, fp.output, target4)).v[0];
    };

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& w = *params[pi].value;
        GradCheckEntry worst;
        worst.name = params[pi].name;
        for (std::size_t k = 0; k < w.v.size(); ++k) {
            const double keep = w.v[k];
            w.v[k] = keep + fd_step;
            const double up = loss_at();
            w.v[k] = keep - fd_step;
            const double dn = loss_at();
            w.v[k] = keep;
            const double numeric = (up - dn) / (2.0 * fd_step);
            const double a = analytic[pi].v[k];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel >= worst.rel_err) {
                worst.index = k;
                worst.analytic = a;
                worst.numeric = numeric;
                worst.rel_err = rel;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, worst.rel_err);
        report.entries.push_back(std::move(worst));
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const GradCheckEntry& a, const GradCheckEntry& b) {
                  return a.rel_err > b.rel_err;
              });
    return report;
}

}  // namespace hicenhance::train
