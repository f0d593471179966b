from django.apps import AppConfig

class ApptimesteppingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apptimestepping'
    verbose_name = 'Navier-Stokes timestepping'
