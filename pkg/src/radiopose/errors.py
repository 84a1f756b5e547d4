"""Exception types raised across the radiopose package."""


class RadioPoseError(Exception):
    """Base class for all radiopose errors."""


class NotSkew(RadioPoseError):
    """Input matrix is not skew-symmetric within tolerance."""


class NearPiRotation(RadioPoseError):
    """Rotation angle too close to pi for a well-conditioned SE(3) log."""


class CoincidentPositions(RadioPoseError):
    """Transmitter and receiver positions coincide; geometry undefined."""


class PolarSingularity(RadioPoseError):
    """Direction vector too close to +/-z for the azimuth/elevation chart."""


class SingularNuisanceBlock(RadioPoseError):
    """Nuisance (gain) block of the FIM is singular even after regularization."""


class UnobservableState(RadioPoseError):
    """State FIM is rank deficient; geometry does not pin down the 6D state."""


class SingularJacobian(RadioPoseError):
    """Covariance-transform Jacobian is singular."""


class SingularNormalEquations(RadioPoseError):
    """Gauss-Newton normal equations are singular."""


class SingularInnovationCovariance(RadioPoseError):
    """Innovation covariance cannot be inverted in the Kalman update."""


class GimbalLock(RadioPoseError):
    """Euler-angle pitch within guard band of +/-pi/2."""


class LengthMismatch(RadioPoseError):
    """Paired sequences have different lengths."""


class ConfigError(RadioPoseError):
    """Scenario configuration file is missing keys or fails validation."""
