#pragma once

#include "zone/attention.hpp"
#include "zone/classifier.hpp"
#include "zone/denoise.hpp"
#include "zone/error.hpp"
#include "zone/fft.hpp"
#include "zone/fixtures.hpp"
#include "zone/grid.hpp"
#include "zone/layers.hpp"
#include "zone/pipeline.hpp"
#include "zone/png_io.hpp"
#include "zone/random.hpp"
#include "zone/refine.hpp"
#include "zone/smoother.hpp"
#include "zone/ztf.hpp"
