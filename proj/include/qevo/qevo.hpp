#pragma once

#include "qevo/common.hpp"
#include "qevo/dataset.hpp"
#include "qevo/float_train.hpp"
#include "qevo/io.hpp"
#include "qevo/network.hpp"
#include "qevo/optimizers.hpp"
#include "qevo/pipeline.hpp"
#include "qevo/probmodel.hpp"
#include "qevo/quantizer.hpp"
