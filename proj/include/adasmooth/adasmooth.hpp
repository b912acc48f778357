#pragma once

// Adaptive Gaussian smoothing: a parameters network estimates per-volume noise
// and emits a filter width; the main network builds the filter, smooths the
// volume and classifies it. Everything is trained end to end.

#include "adasmooth/classifier.hpp"
#include "adasmooth/conv3d.hpp"
#include "adasmooth/cube.hpp"
#include "adasmooth/dataset.hpp"
#include "adasmooth/error.hpp"
#include "adasmooth/gaussian_filter.hpp"
#include "adasmooth/params_net.hpp"
#include "adasmooth/phantom.hpp"
#include "adasmooth/trainer.hpp"
#include "adasmooth/volume.hpp"
#include "adasmooth/volume_io.hpp"
