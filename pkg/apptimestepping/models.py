from django.db import models

from .mdlProcess.mdlEnum import MonitorVariant, Scheme, Termination


# One row per finished run, written by the harness
class RunRecord(models.Model):
    SCHEME_CHOICES = [
        (Scheme.SemiImplicit, 'Semi-implicit Euler'),
        (Scheme.FullyImplicit, 'Fully implicit Euler'),
    ]
    MONITOR_CHOICES = [(variant, variant) for variant in MonitorVariant.All]
    TERMINATION_CHOICES = [
        (Termination.Completed, 'Completed'),
        (Termination.HorizonReached, 'Horizon reached'),
        (Termination.NonConvergence, 'Fixed point did not converge'),
        (Termination.BoundViolated, 'Bound violated'),
    ]

    name = models.CharField(max_length=200)
    scheme = models.CharField(max_length=20, choices=SCHEME_CHOICES)
    monitor = models.CharField(max_length=20, choices=MONITOR_CHOICES)
    n = models.IntegerField()
    k = models.FloatField()
    nu = models.FloatField()
    steps = models.IntegerField()
    termination = models.CharField(max_length=20, choices=TERMINATION_CHOICES)
    first_violation = models.IntegerField(null=True, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    csv_sha256 = models.CharField(max_length=64, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at', '-id']

    def __str__(self):
        return f"{self.name} ({self.scheme}, k={self.k}): {self.termination}"
