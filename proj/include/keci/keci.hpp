#pragma once

#include "keci/autodiff/gradcheck.hpp"
#include "keci/autodiff/ops.hpp"
#include "keci/autodiff/parameter_store.hpp"
#include "keci/autodiff/tape.hpp"
#include "keci/autodiff/tensor.hpp"
#include "keci/corpus/dataset_io.hpp"
#include "keci/corpus/document.hpp"
#include "keci/corpus/kfold.hpp"
#include "keci/corpus/schema.hpp"
#include "keci/corpus/toy.hpp"
#include "keci/encoder/span_encoder.hpp"
#include "keci/encoder/vocabulary.hpp"
#include "keci/error.hpp"
#include "keci/eval/ablation.hpp"
#include "keci/eval/attention.hpp"
#include "keci/eval/decode.hpp"
#include "keci/eval/metrics.hpp"
#include "keci/eval/predict.hpp"
#include "keci/fusion/fusion.hpp"
#include "keci/kb/graph.hpp"
#include "keci/kb/knowledge_base.hpp"
#include "keci/kgnn/rgcn.hpp"
#include "keci/nn/layers.hpp"
#include "keci/random.hpp"
#include "keci/spangraph/spangraph.hpp"
#include "keci/train/adam.hpp"
#include "keci/train/checkpoint.hpp"
#include "keci/train/config.hpp"
#include "keci/train/loss.hpp"
#include "keci/train/model.hpp"
#include "keci/train/pipeline_check.hpp"
#include "keci/train/trainer.hpp"
