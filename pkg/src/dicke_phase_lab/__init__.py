"""Phase diagram, Loschmidt echoes and quench simulation of the anisotropic Dicke model."""
