#pragma once

#include "madda/errors.hpp"
#include "madda/numerics/tensor.hpp"
#include "madda/numerics/gemm.hpp"
#include "madda/numerics/graph.hpp"
#include "madda/numerics/optimizer.hpp"
#include "madda/numerics/gradcheck.hpp"
#include "madda/numerics/random.hpp"
#include "madda/data/dataset.hpp"
#include "madda/data/idx.hpp"
#include "madda/data/usps.hpp"
#include "madda/data/synthetic.hpp"
#include "madda/models/networks.hpp"
#include "madda/models/checkpoint.hpp"
#include "madda/losses.hpp"
#include "madda/training/triplets.hpp"
#include "madda/training/centers.hpp"
#include "madda/training/source.hpp"
#include "madda/training/adapt.hpp"
#include "madda/inference/embed.hpp"
#include "madda/inference/knn.hpp"
#include "madda/experiment/config.hpp"
#include "madda/experiment/datasets.hpp"
#include "madda/experiment/metrics.hpp"
#include "madda/experiment/commands.hpp"
#include "madda/experiment/cli.hpp"
