#pragma once

#include "hazgam/synth.hpp"
#include "hazgam/train.hpp"

namespace hazgam::testing {

// Small synthetic split for fast training tests.
struct SmallProblem {
    Split split;
    RecordSet full;
    TrainingData train, val, test;
    WeightingContext ctx;
    NetworkParams init;
};

inline SmallProblem small_problem(std::uint64_t seed = 1, std::size_t events = 40) {
    SynthConfig sc;
    sc.n_events = events;
    sc.min_records_per_event = 5;
    sc.max_records_per_event = 15;
    sc.b_value = 0.35;
    SmallProblem p;
    p.full = synth_generate(sc, seed).records;
    p.split = split_by_event(p.full, {}, seed + 1);
    p.train = make_training_data(p.split.train);
    p.val = make_training_data(p.split.val);
    p.test = make_training_data(p.split.test);
    p.ctx = make_weighting(HazardCoeffs::reference());
    p.init = init_network(default_architecture(4, 1), seed + 2);
    return p;
}

inline TrainConfig quick_config(std::size_t epochs = 5) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.batch_size = 64;
    c.learning_rate = 3e-3;
    c.seed = 99;
    return c;
}

}  // namespace hazgam::testing
