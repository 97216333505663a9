from django.apps import AppConfig


class ShearflowConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'shearflow'
    verbose_name = 'Couette shear-flow simulator'
