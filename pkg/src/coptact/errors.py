"""Exception types raised across the toolkit."""


class CopTactError(Exception):
    """Base class for all toolkit errors."""


class RankDeficient(CopTactError):
    """Projection onto SO(3) is not unique because the input is (near) singular."""


class DegenerateSingularValues(CopTactError):
    """Two singular values coincide where the projection gradient needs them apart."""


class NoContact(CopTactError):
    """The active taxel set is empty."""


class DegenerateNormal(CopTactError):
    """Inverse-distance weighted normals cancel out."""


class DegenerateBlend(CopTactError):
    """Blended taxel direction has (near) zero length."""


class IllConditioned(UserWarning):
    """Normal-equations matrix of the CoP force solve is badly conditioned."""


class EmptyDataset(CopTactError):
    pass


class AllSamplesSkipped(CopTactError):
    """Every calibration sample had an empty active set."""


class Unstable(CopTactError):
    """Actuator integration diverged."""


class GridMismatch(CopTactError):
    pass


class SingularDesign(CopTactError):
    """Linear probe design matrix is rank deficient and no ridge was given."""


class DegenerateTarget(CopTactError):
    """A target column is constant, so r^2 is undefined."""


class SingleCluster(CopTactError):
    """Silhouette coefficient needs at least two clusters."""


class ConfigError(CopTactError):
    """Invalid run configuration or input file schema."""
