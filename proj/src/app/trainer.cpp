#include <cstdio>
#include <ostream>

#include "derain/app.hpp"

namespace derain::app {

Trainer::Trainer(ModelConfig cfg, LossWeights weights, std::uint64_t seed)
    : net_(std::move(cfg), seed), weights_(weights) {
    weights_.validate();
}

Trainer::Trainer(const Checkpoint& ckpt, LossWeights weights)
    : net_(ckpt.config, ckpt.params), weights_(weights), adam_(ckpt.adam) {
    weights_.validate();
}

LossBreakdown Trainer::step(const Batch& batch, double lr) {
    Tape<float> tape;
    const Var<float> o = tape.constant(batch.o);
    const ModelOutputs<float> out = net_.forward(o);
    const LossTerms<float> terms = compute_losses(out, o, tape.constant(batch.b),
                                                  tape.constant(batch.r), weights_,
                                                  net_.config().ablation);
    tape.backward(terms.total);
    net_.params().collect_grads(tape);
    adam_step(net_.params(), adam_, lr);
    return terms.breakdown;
}

LossBreakdown Trainer::losses(const Batch& batch) const {
    Tape<float> tape;
    const Var<float> o = tape.constant(batch.o);
    const ModelOutputs<float> out = net_.forward(o);
    return compute_losses(out, o, tape.constant(batch.b), tape.constant(batch.r), weights_,
                          net_.config().ablation)
        .breakdown;
}

InferenceResult Trainer::infer(const Tensor<float>& o) const {
    CropRecord record;
    Tape<float> tape;
    const Var<float> input =
        tape.constant(pad_to_valid(o, net_.config().spatial_multiple(), record));
    const ModelOutputs<float> out = net_.forward(input);
    InferenceResult result;
    result.final = crop_back(out.final.value(), record);
    if (out.rain_hat) result.rain_hat = crop_back(out.rain_hat->value(), record);
    if (out.free_hat) result.free_hat = crop_back(out.free_hat->value(), record);
    if (out.guide_hat) result.guide_hat = crop_back(out.guide_hat->value(), record);
    return result;
}

Checkpoint Trainer::checkpoint(std::int64_t epoch) const {
    return Checkpoint{net_.config(), net_.params(), adam_, epoch};
}

Batch single_batch(const RainPair& pair) {
    return Batch{pair.o, pair.b, pair.r, {0}};
}

void write_log_header(std::ostream& os) {
    os << "epoch,lr,guide,rain,rain_free,physical,total\n";
}

void write_log_row(std::ostream& os, const EpochLog& row) {
    char buf[512];
    const LossBreakdown& l = row.loss;
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(row.epoch), row.lr, l.guide, l.rain, l.rain_free,
                  l.physical, l.total);
    os << buf;
}

}  // namespace derain::app
