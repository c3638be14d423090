#pragma once

#include "latentmc/core.hpp"
#include "latentmc/io/binary.hpp"

#include "latentmc/forward/fbp.hpp"
#include "latentmc/forward/image.hpp"
#include "latentmc/forward/image_io.hpp"
#include "latentmc/forward/noise.hpp"
#include "latentmc/forward/phantom.hpp"
#include "latentmc/forward/radon.hpp"

#include "latentmc/nn/builder.hpp"
#include "latentmc/nn/layers.hpp"
#include "latentmc/nn/lipschitz.hpp"
#include "latentmc/nn/network.hpp"
#include "latentmc/nn/serialize.hpp"
#include "latentmc/nn/spectral.hpp"
#include "latentmc/nn/tensor.hpp"

#include "latentmc/sampler/chain.hpp"
#include "latentmc/sampler/ergodicity.hpp"
#include "latentmc/sampler/hmc.hpp"
#include "latentmc/sampler/posterior.hpp"

#include "latentmc/analysis/metrics.hpp"
#include "latentmc/analysis/mmd.hpp"
#include "latentmc/analysis/posterior_stats.hpp"
