#pragma once

#include "ddlsff/classic.hpp"
#include "ddlsff/convolve.hpp"
#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/focus_volume.hpp"
#include "ddlsff/grid.hpp"
#include "ddlsff/io.hpp"
#include "ddlsff/kernels.hpp"
#include "ddlsff/metrics.hpp"
#include "ddlsff/noise.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/philox.hpp"
#include "ddlsff/refiner.hpp"
#include "ddlsff/stack.hpp"
#include "ddlsff/synth.hpp"
#include "ddlsff/tensor.hpp"
#include "ddlsff/volume_io.hpp"
#include "ddlsff/weights_io.hpp"

#define DDLSFF_VERSION "0.1.0"
