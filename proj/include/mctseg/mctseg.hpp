#pragma once

#include "mctseg/checkpoint.hpp"
#include "mctseg/config.hpp"
#include "mctseg/dataset.hpp"
#include "mctseg/error.hpp"
#include "mctseg/experiments.hpp"
#include "mctseg/image.hpp"
#include "mctseg/imageio.hpp"
#include "mctseg/lightunet.hpp"
#include "mctseg/metrics.hpp"
#include "mctseg/model.hpp"
#include "mctseg/nn.hpp"
#include "mctseg/patches.hpp"
#include "mctseg/phantom.hpp"
#include "mctseg/protocol.hpp"
#include "mctseg/reprlayer.hpp"
#include "mctseg/rng.hpp"
#include "mctseg/trainer.hpp"
