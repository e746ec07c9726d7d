#pragma once

#include "drnn/errors.hpp"
#include "drnn/panel.hpp"
#include "drnn/random.hpp"
#include "drnn/parallel.hpp"
#include "drnn/neighbors.hpp"
#include "drnn/estimators.hpp"
#include "drnn/validation.hpp"
#include "drnn/inference.hpp"
#include "drnn/tuning.hpp"
#include "drnn/synthetic.hpp"
#include "drnn/tensor.hpp"
#include "drnn/experiment.hpp"
#include "drnn/config.hpp"
