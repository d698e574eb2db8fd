#pragma once

#include "ewishart/error.hpp"
#include "ewishart/linalg.hpp"
#include "ewishart/geometry.hpp"
#include "ewishart/model.hpp"
#include "ewishart/estimation.hpp"
#include "ewishart/learning.hpp"
#include "ewishart/io.hpp"
#include "ewishart/config.hpp"
#include "ewishart/experiments.hpp"
