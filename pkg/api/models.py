from pydantic import BaseModel, Field
from typing import List, Dict

class BuildRequest(BaseModel):
    m: int = Field(default=6, ge=3, le=64, description="Number of Scherk periods; genus is m - 1")
    theta: float = Field(default=0.0, gt=-0.5, lt=0.5, description="Unbalancing angle")
    res: int = Field(default=8, ge=2, le=32, description="Grid cells per Scherk unit")

class BuildSummary(BaseModel):
    vertices: int = Field(description="Number of mesh vertices")
    faces: int = Field(description="Number of triangles")
    euler_characteristic: int = Field(description="V - E + F, expected 1 - 2m")
    genus: int = Field(description="Genus, expected m - 1")
    boundary_loops: int = Field(description="Boundary components on the unit sphere, expected 3")
    area: float = Field(description="Total triangle area")
    max_H: float = Field(description="Largest |H| at interior vertices")
    max_Theta: float = Field(description="Largest boundary-angle deviation |nu . x|")

class VerifyReport(BaseModel):
    passed: bool = Field(description="All verification thresholds met")
    euler_characteristic: int
    boundary_loops: int
    genus: int
    sphere_deviation: float = Field(description="Largest distance of a boundary vertex from the sphere")
    symmetry_deviation: float = Field(description="Largest dihedral orbit mismatch of the vertices")
    max_H: float
    max_Theta: float
    weighted_H: float = Field(description="Weighted C^{0,beta} norm of H")
    hausdorff_to_W: float = Field(description="Hausdorff distance to the singular surface W_theta")
    self_intersections: int
    min_angle_deg: float
    max_angle_deg: float
    max_aspect: float
    median_aspect: float

class Constants(BaseModel):
    R_crit: float = Field(description="Boundary circle radius of the critical catenoid")
    z_crit: float = Field(description="Height of the boundary circles")
    r_crit: float = Field(description="Waist radius")
    x_crit: float = Field(description="Latitude of the boundary circles")
    theta_min: float = Field(description="End of the catenoid family (r_theta = 1)")
    h_min: float
    area_K: float = Field(description="Area of the critical catenoid")
    area_K_plus_pi: float = Field(description="Area of the catenoid plus the equatorial disk")
    margins: Dict[str, float] = Field(description="r_crit - 1/e and x_crit - pi/4")

class FamilyRow(BaseModel):
    theta: float
    r_theta: float
    h: float

class KernelRow(BaseModel):
    piece: str = Field(description="D (disk), A (annulus) or K (catenoid)")
    n: int = Field(description="Fourier mode")
    determinant: float
    margin: float
    excluded: bool = Field(description="Mode removed by the dihedral symmetry")

class KernelTable(BaseModel):
    rows: List[KernelRow]
    min_margin: float

class HealthCheck(BaseModel):
    status: str
    constants_loaded: bool
    version: str

class ServiceInfo(BaseModel):
    message: str
    version: str
    endpoints: Dict[str, str]
