"""Normal-form machinery and spectral simulation for cubic NLS on flat tori."""
