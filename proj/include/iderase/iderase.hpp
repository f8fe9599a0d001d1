#pragma once

// Umbrella header: feature-space proactive face-swap defense toolkit.

#include "iderase/autodiff.hpp"
#include "iderase/common.hpp"
#include "iderase/config.hpp"
#include "iderase/conv.hpp"
#include "iderase/dataset.hpp"
#include "iderase/degradation.hpp"
#include "iderase/evaluator.hpp"
#include "iderase/extractor.hpp"
#include "iderase/fpm.hpp"
#include "iderase/frg.hpp"
#include "iderase/gallery.hpp"
#include "iderase/image.hpp"
#include "iderase/interference.hpp"
#include "iderase/losses.hpp"
#include "iderase/metrics.hpp"
#include "iderase/nn.hpp"
#include "iderase/ops.hpp"
#include "iderase/plot.hpp"
#include "iderase/report.hpp"
#include "iderase/rng.hpp"
#include "iderase/serialize.hpp"
#include "iderase/swap.hpp"
#include "iderase/tensor.hpp"
#include "iderase/trainer.hpp"
