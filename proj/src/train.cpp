#include "vpred/train.hpp"

#include <algorithm>
#include <cmath>

#include "vpred/adam.hpp"

namespace vpred {

void TrainConfig::validate() const {
    require(epochs >= 1, "train config: epochs >= 1 required");
    require(batch_size >= 1, "train config: batch_size >= 1 required");
    require(lr > 0.0f, "train config: lr must be positive");
    require(lr_patience >= 1 && eval_examples >= 1, "train config: bad evaluation settings");
}

double sample_noise_sigma(Rng& rng) {
    const double u = rng.uniform();
    return u * u;
}

TrainExample make_example(const ImageSequence& seq, int target_frame, const ModelArch& arch, double sigma,
                          Rng& noise_rng) {
    const int tau = arch.tau;
    require(target_frame >= tau && target_frame < seq.t,
            strfmt("make_example: target frame %d needs %d preceding frames in a %d-frame sequence",
                   target_frame, tau, seq.t));
    TrainExample ex;
    ex.sigma = arch.prediction_only ? 0.0 : sigma;
    ex.target = seq.frame_tensor(target_frame);

    // conditioning stack, most recent first
    Tensor cond;
    if (tau > 0) {
        cond = Tensor({1, tau, seq.h, seq.w});
        for (int k = 0; k < tau; ++k) {
            const float* src = seq.frame(target_frame - 1 - k);
            std::copy(src, src + static_cast<int64_t>(seq.h) * seq.w, cond.ptr(0, k, 0, 0));
        }
    }
    if (arch.prediction_only) {
        ex.input = std::move(cond);
        return ex;
    }
    Tensor noisy = ex.target;
    for (int64_t i = 0; i < noisy.numel(); ++i) {
        noisy[i] += static_cast<float>(sigma) * noise_rng.normal_f();
    }
    if (tau == 0) {
        ex.input = std::move(noisy);
        return ex;
    }
    ex.input = DenoiserModel::stack_input(noisy, cond, tau);
    return ex;
}

namespace {

struct ExampleRef {
    int seq = 0;
    int frame = 0;
};

std::vector<ExampleRef> enumerate_examples(const SequenceDataset& ds, const std::vector<int>& indices, int tau) {
    std::vector<ExampleRef> out;
    for (int si : indices) {
        const ImageSequence& s = ds.seq(si);
        for (int t = tau; t < s.t; ++t) {
            out.push_back({si, t});
        }
    }
    return out;
}

Tensor batch_stack(const std::vector<Tensor>& items) {
    const auto& s0 = items[0].shape();
    Tensor out({static_cast<int>(items.size()), s0[1], s0[2], s0[3]});
    const int64_t stride = items[0].numel();
    for (size_t i = 0; i < items.size(); ++i) {
        std::copy(items[i].data(), items[i].data() + stride, out.data() + stride * static_cast<int64_t>(i));
    }
    return out;
}

}  // namespace

double evaluate_model(DenoiserModel& model, const SequenceDataset& ds, const std::vector<int>& indices,
                      int max_examples, double sigma, uint64_t seed) {
    require(!indices.empty(), "evaluate_model: empty index list");
    const Mode saved = model.mode();
    model.set_mode(Mode::inference);
    const int tau = model.arch().tau;

    auto examples = enumerate_examples(ds, indices, tau);
    const int n = std::min<int>(max_examples, static_cast<int>(examples.size()));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, 0xe7a1 + static_cast<uint64_t>(i));
        // fixed ladder of noise levels when sigma is not pinned
        const double s = sigma >= 0.0 ? sigma : [&] {
            const double u = (i + 0.5) / n;
            return u * u;
        }();
        const auto& ref = examples[static_cast<size_t>(i)];
        TrainExample ex = make_example(ds.seq(ref.seq), ref.frame, model.arch(), s, rng);
        Tensor xhat = model.forward(ex.input);
        double mse = 0.0;
        for (int64_t j = 0; j < xhat.numel(); ++j) {
            const double d = static_cast<double>(xhat[j]) - ex.target[j];
            mse += d * d;
        }
        total += mse / static_cast<double>(xhat.numel());
    }
    model.set_mode(saved);
    return total / n;
}

TrainResult train_model(DenoiserModel& model, const SequenceDataset& ds, const TrainConfig& cfg,
                        const std::function<void(const EpochStats&)>& on_epoch) {
    cfg.validate();
    require(!ds.train_indices.empty(), "train: dataset has no training split");
    const int tau = model.arch().tau;
    for (int si : ds.train_indices) {
        require(ds.seq(si).t >= tau + 1, "train: sequence shorter than tau+1 frames");
    }

    auto examples = enumerate_examples(ds, ds.train_indices, tau);
    require(!examples.empty(), "train: no usable examples");

    std::vector<Tensor*> param_tensors;
    std::vector<const Tensor*> grad_tensors;
    for (auto& [name, p] : model.params()) {
        param_tensors.push_back(&p->value);
        p->ensure_grad();
        grad_tensors.push_back(&p->grad);
    }
    AdamState adam = AdamState::init(param_tensors, cfg.lr);

    TrainResult result;
    double best_test = std::numeric_limits<double>::infinity();
    int stale_evals = 0;
    int halvings = 0;

    // finite checks run on the loss each step instead of inside every op
    const bool checks_were_on = finite_checks_enabled();
    set_finite_checks(false);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.set_mode(Mode::training);
        std::vector<size_t> order(examples.size());
        for (size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        Rng perm_rng(cfg.seed, 0x9e00 + static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[perm_rng.below(static_cast<uint32_t>(i))]);
        }

        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t start = 0; start + 1 <= order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<Tensor> inputs, targets;
            for (size_t bi = start; bi < end; ++bi) {
                const auto& ref = examples[order[bi]];
                Rng ex_rng(cfg.seed, (static_cast<uint64_t>(epoch) << 32) | order[bi]);
                const double sigma = sample_noise_sigma(ex_rng);
                TrainExample ex = make_example(ds.seq(ref.seq), ref.frame, model.arch(), sigma, ex_rng);
                inputs.push_back(std::move(ex.input));
                targets.push_back(std::move(ex.target));
            }
            Var input = leaf(batch_stack(inputs), false);
            Tensor target = batch_stack(targets);

            model.zero_grads();
            Var xhat = model.forward_var(input);
            Var loss = mse_loss(xhat, target);
            const double loss_value = loss->value[0];
            if (!std::isfinite(loss_value)) {
                if (!cfg.nan_checkpoint_path.empty()) {
                    save_model(model, cfg.nan_checkpoint_path);
                }
                set_finite_checks(checks_were_on);
                fail(strfmt("train: non-finite loss %g at epoch %d batch %d%s", loss_value, epoch, n_batches,
                            cfg.nan_checkpoint_path.empty()
                                ? ""
                                : (" (diagnostic checkpoint: " + cfg.nan_checkpoint_path + ")").c_str()));
            }
            backward(loss);
            adam_step(param_tensors, grad_tensors, adam);
            epoch_loss += loss_value;
            n_batches++;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mse = epoch_loss / std::max(n_batches, 1);
        stats.test_mse = ds.test_indices.empty()
                             ? stats.train_mse
                             : evaluate_model(model, ds, ds.test_indices, cfg.eval_examples, -1.0, cfg.seed);
        stats.lr = adam.lr;
        stats.lr_halvings = halvings;
        result.curves.push_back(stats);
        if (on_epoch) {
            on_epoch(stats);
        }

        // plateau rule: halve lr when the test loss stops improving
        if (stats.test_mse < best_test * (1.0 - cfg.lr_min_improvement)) {
            best_test = stats.test_mse;
            stale_evals = 0;
        } else {
            stale_evals++;
            if (stale_evals >= cfg.lr_patience) {
                adam.lr *= 0.5f;
                halvings++;
                stale_evals = 0;
            }
        }
    }

    set_finite_checks(checks_were_on);
    model.set_mode(Mode::inference);
    return result;
}

}  // namespace vpred
