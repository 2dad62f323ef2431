#pragma once

#include "cellmotif/analysis.hpp"
#include "cellmotif/atom_fit.hpp"
#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/image_io.hpp"
#include "cellmotif/kmeans.hpp"
#include "cellmotif/lattice.hpp"
#include "cellmotif/motif_image.hpp"
#include "cellmotif/optimize.hpp"
#include "cellmotif/period.hpp"
#include "cellmotif/pipeline.hpp"
#include "cellmotif/radon_psd.hpp"
#include "cellmotif/results_json.hpp"
#include "cellmotif/synthgen.hpp"
#include "cellmotif/vec2.hpp"
