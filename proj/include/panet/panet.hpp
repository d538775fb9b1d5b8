#pragma once

// Everything except the command-line front end.

#include "panet/errors.hpp"
#include "panet/introspect/introspect.hpp"
#include "panet/io/binary.hpp"
#include "panet/model/config.hpp"
#include "panet/model/gradcheck.hpp"
#include "panet/model/network.hpp"
#include "panet/model/params.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/augment.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/shapegen/geometry.hpp"
#include "panet/shapegen/render.hpp"
#include "panet/shapegen/shape.hpp"
#include "panet/shapegen/viewpoints.hpp"
#include "panet/tensor/gradcheck.hpp"
#include "panet/tensor/ops.hpp"
#include "panet/tensor/tape.hpp"
#include "panet/tensor/tensor.hpp"
#include "panet/train/ablation.hpp"
#include "panet/train/adamw.hpp"
#include "panet/train/checkpoint.hpp"
#include "panet/train/config.hpp"
#include "panet/train/metrics.hpp"
#include "panet/train/trainer.hpp"
