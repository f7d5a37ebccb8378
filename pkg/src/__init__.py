# Fractional Helmholtz Inverse Source Lab
