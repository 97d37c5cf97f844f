#pragma once

#include "subcluster/clustering.hpp"
#include "subcluster/controller.hpp"
#include "subcluster/dataset.hpp"
#include "subcluster/encoder.hpp"
#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/metrics.hpp"
#include "subcluster/pipeline.hpp"
#include "subcluster/report_io.hpp"
#include "subcluster/rng.hpp"
#include "subcluster/subclass_map.hpp"
