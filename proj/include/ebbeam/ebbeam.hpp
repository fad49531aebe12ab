#pragma once

#include "ebbeam/errors.hpp"
#include "ebbeam/polynomial.hpp"
#include "ebbeam/quadrature.hpp"
#include "ebbeam/linalg.hpp"
#include "ebbeam/model.hpp"
#include "ebbeam/controller.hpp"
#include "ebbeam/validation.hpp"
#include "ebbeam/fem.hpp"
#include "ebbeam/stepper.hpp"
#include "ebbeam/spectral.hpp"
#include "ebbeam/csv.hpp"
#include "ebbeam/config.hpp"
#include "ebbeam/harness.hpp"
